"""I/O-efficient flow accumulation and flooding on grid terrains.

Grids are 2-d numpy arrays: uint8 flow directions (powers of two 1=E, 2=SE,
4=S, 8=SW, 16=W, 32=NW, 64=N, 128=NE; 0 = sink, 255 = nodata), uint64 flow
accumulation counts, float32 elevations with NaN as nodata.
"""

from ._core import (
    EmgridError,
    Layout,
    NODATA,
    SINK,
    __version__,
    accumulate,
    brute_force_accumulation,
    brute_force_flood,
    choose_subgrid_size,
    deinterleave,
    estimate_confluence,
    flood,
    gen_drainage,
    gen_meander,
    interleave,
    predicted_io_overhead,
    predicted_tfp_io_volume,
    read_grid,
    validate_acyclic,
    write_grid,
    zorder_cell,
    zorder_offset,
)

__all__ = [
    "EmgridError",
    "Layout",
    "NODATA",
    "SINK",
    "__version__",
    "accumulate",
    "brute_force_accumulation",
    "brute_force_flood",
    "choose_subgrid_size",
    "deinterleave",
    "estimate_confluence",
    "flood",
    "gen_drainage",
    "gen_meander",
    "interleave",
    "predicted_io_overhead",
    "predicted_tfp_io_volume",
    "read_grid",
    "validate_acyclic",
    "write_grid",
    "zorder_cell",
    "zorder_offset",
]
