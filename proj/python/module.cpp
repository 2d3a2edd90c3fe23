#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "emgrid/accum_naive.hpp"
#include "emgrid/accum_separator.hpp"
#include "emgrid/accum_tfp.hpp"
#include "emgrid/flood.hpp"
#include "emgrid/grid_io.hpp"
#include "emgrid/terrain.hpp"
#include "emgrid/zorder.hpp"

namespace py = pybind11;
using namespace emgrid;

namespace {

FlowDirGrid flowdir_from_array(const py::array_t<std::uint8_t>& array) {
  if (array.ndim() != 2) throw py::value_error("flow directions must be a 2-d array");
  const GridDims dims{static_cast<std::uint64_t>(array.shape(0)),
                      static_cast<std::uint64_t>(array.shape(1))};
  FlowDirGrid fd(dims, Layout::RowMajor);
  auto view = array.unchecked<2>();
  for (std::uint64_t r = 0; r < dims.height; ++r)
    for (std::uint64_t c = 0; c < dims.width; ++c)
      fd.at(r, c) = decode_direction(view(r, c));
  normalize_to_sinks(fd);
  return fd;
}

py::array_t<std::uint8_t> flowdir_to_array(const FlowDirGrid& fd) {
  py::array_t<std::uint8_t> array({fd.dims.height, fd.dims.width});
  auto view = array.mutable_unchecked<2>();
  for (std::uint64_t r = 0; r < fd.dims.height; ++r)
    for (std::uint64_t c = 0; c < fd.dims.width; ++c)
      view(r, c) = encode_direction(fd.at(r, c));
  return array;
}

ElevationGrid elevation_from_array(const py::array_t<float>& array) {
  if (array.ndim() != 2) throw py::value_error("elevations must be a 2-d array");
  const GridDims dims{static_cast<std::uint64_t>(array.shape(0)),
                      static_cast<std::uint64_t>(array.shape(1))};
  ElevationGrid elev(dims, Layout::RowMajor);
  auto view = array.unchecked<2>();
  for (std::uint64_t r = 0; r < dims.height; ++r)
    for (std::uint64_t c = 0; c < dims.width; ++c) elev.at(r, c) = view(r, c);
  return elev;
}

py::array_t<float> elevation_to_array(const ElevationGrid& elev) {
  py::array_t<float> array({elev.dims.height, elev.dims.width});
  auto view = array.mutable_unchecked<2>();
  for (std::uint64_t r = 0; r < elev.dims.height; ++r)
    for (std::uint64_t c = 0; c < elev.dims.width; ++c) view(r, c) = elev.at(r, c);
  return array;
}

py::array_t<std::uint64_t> flowacc_to_array(const FlowAccGrid& acc) {
  py::array_t<std::uint64_t> array({acc.dims.height, acc.dims.width});
  auto view = array.mutable_unchecked<2>();
  for (std::uint64_t r = 0; r < acc.dims.height; ++r)
    for (std::uint64_t c = 0; c < acc.dims.width; ++c) view(r, c) = acc.at(r, c);
  return array;
}

py::dict stats_to_dict(const IoStats& stats, std::uint64_t pointer_records) {
  py::dict d;
  d["block_reads"] = stats.block_reads;
  d["block_writes"] = stats.block_writes;
  d["block_bytes"] = stats.block_bytes;
  d["io_volume"] = stats.io_volume();
  d["peak_pinned_bytes"] = stats.peak_pinned_bytes;
  if (pointer_records) d["pointer_records"] = pointer_records;
  return d;
}

py::tuple run_accumulate(const py::array_t<std::uint8_t>& flowdir, const std::string& algo,
                         std::uint64_t mem, std::uint64_t block, std::uint32_t base_side,
                         Layout layout) {
  FlowDirGrid fd = flowdir_from_array(flowdir);
  fd.layout = layout;
  if (const auto witness = validate_acyclic(fd))
    throw CycleError(witness->row, witness->col);

  const bool pinning = algo == "sep-aware" || algo == "sep-aware-z";
  DeviceConfig config{block, std::max(mem, 2 * block),
                      pinning ? CachePolicy::LRUWithPinning : CachePolicy::LRU};
  auto dev = make_flowdir_device(fd, config);

  AccumResult result;
  if (algo == "naive-row") {
    result = naive_accumulation(dev, fd.dims, fd.layout, TraversalOrder::RowByRow);
  } else if (algo == "naive-z") {
    result = naive_accumulation(dev, fd.dims, fd.layout, TraversalOrder::ZOrderTraversal);
  } else if (algo == "sep-aware") {
    result = cache_aware_accumulation(dev, fd.dims, fd.layout);
  } else if (algo == "sep-aware-z") {
    fd.layout = Layout::ZOrder;
    auto zdev = make_flowdir_device(fd, config);
    result = cache_aware_accumulation_z(zdev, fd.dims);
  } else if (algo == "sep-oblivious") {
    result = cache_oblivious_accumulation(dev, fd.dims, fd.layout, base_side);
  } else if (algo == "tfp") {
    const auto topo = topological_numbering(fd);
    result = tfp_accumulation(dev, fd.dims, fd.layout, topo);
  } else {
    throw py::value_error("unknown algorithm " + algo);
  }
  return py::make_tuple(flowacc_to_array(result.acc),
                        stats_to_dict(result.stats, result.pointer_records));
}

py::array run_flood(const py::array_t<float>& elevation, const std::string& algo,
                    std::uint64_t mem, std::uint64_t block) {
  const ElevationGrid elev = elevation_from_array(elevation);
  if (algo == "watershed") return elevation_to_array(flood_watershed(elev));
  if (algo == "separator") {
    DeviceConfig config{block, std::max(mem, 2 * block), CachePolicy::LRU};
    const auto payload = payload_bytes(elev);
    auto dev = BlockDevice::in_memory(payload.size(), config);
    dev.raw_write(0, payload);
    return elevation_to_array(
        separator_flooding(dev, elev.dims, elev.layout).flooded);
  }
  throw py::value_error("unknown flooding algorithm " + algo);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "I/O-efficient flow accumulation and flooding on grid terrains";

  py::register_exception<Error>(m, "EmgridError", PyExc_ValueError);

  py::enum_<Layout>(m, "Layout")
      .value("ROW_MAJOR", Layout::RowMajor)
      .value("Z_ORDER", Layout::ZOrder);

  m.def("interleave", [](std::uint32_t y, std::uint32_t x) { return interleave(y, x); },
        py::arg("y"), py::arg("x"),
        "Z-order index of cell (y, x): row bits above column bits");
  m.def("deinterleave", [](std::uint64_t z) { return deinterleave(z); }, py::arg("z"));
  m.def(
      "zorder_offset",
      [](std::uint64_t height, std::uint64_t width, std::uint64_t row, std::uint64_t col) {
        return SegmentTables::build(GridDims{height, width}).offset_of(CellRef{row, col});
      },
      py::arg("height"), py::arg("width"), py::arg("row"), py::arg("col"),
      "offset of a cell in the Z-order file of a height x width grid");
  m.def(
      "zorder_cell",
      [](std::uint64_t height, std::uint64_t width, std::uint64_t offset) {
        const CellRef c = SegmentTables::build(GridDims{height, width}).cell_at(offset);
        return py::make_tuple(c.row, c.col);
      },
      py::arg("height"), py::arg("width"), py::arg("offset"));

  m.def("accumulate", &run_accumulate, py::arg("flowdir"), py::arg("algo") = "naive-row",
        py::arg("mem") = 1ull << 20, py::arg("block") = 1ull << 12,
        py::arg("base_side") = 17, py::arg("layout") = Layout::RowMajor,
        "flow accumulation on a simulated block device; returns (counts, io stats)");
  m.def(
      "brute_force_accumulation",
      [](const py::array_t<std::uint8_t>& flowdir) {
        return flowacc_to_array(brute_force_accumulation(flowdir_from_array(flowdir)));
      },
      py::arg("flowdir"), "path-walking oracle for flow accumulation");
  m.def(
      "validate_acyclic",
      [](const py::array_t<std::uint8_t>& flowdir) -> py::object {
        const auto witness = validate_acyclic(flowdir_from_array(flowdir));
        if (!witness) return py::none();
        return py::make_tuple(witness->row, witness->col);
      },
      py::arg("flowdir"), "returns a cell on a directed cycle, or None");

  m.def("flood", &run_flood, py::arg("elevation"), py::arg("algo") = "watershed",
        py::arg("mem") = 1ull << 20, py::arg("block") = 1ull << 12,
        "raise elevations so every cell drains to the grid boundary");
  m.def(
      "brute_force_flood",
      [](const py::array_t<float>& elevation) {
        return elevation_to_array(brute_force_flood(elevation_from_array(elevation)));
      },
      py::arg("elevation"), "best-first lowest-path oracle for flooding");

  m.def(
      "gen_meander",
      [](std::uint64_t n, double c1, double c2) {
        auto terrain = gen_meander(MeanderParams{n, c1, c2});
        return py::make_tuple(flowdir_to_array(terrain.fd), elevation_to_array(terrain.elev),
                              terrain.river_cells);
      },
      py::arg("n"), py::arg("c1") = 0.125, py::arg("c2") = 0.25,
      "meandering-river adversary; returns (flowdir, elevation, river_cells)");
  m.def(
      "gen_drainage",
      [](std::uint64_t height, std::uint64_t width, std::uint64_t seed) {
        return flowdir_to_array(gen_random_drainage(GridDims{height, width}, seed));
      },
      py::arg("height"), py::arg("width"), py::arg("seed") = 0,
      "random convergent drainage tree");
  m.def(
      "estimate_confluence",
      [](const py::array_t<std::uint8_t>& flowdir, const std::vector<std::uint64_t>& windows,
         std::uint64_t samples, std::uint64_t seed) {
        const auto report = estimate_confluence(flowdir_from_array(flowdir), windows,
                                                ConfluenceSampling{samples, seed});
        py::list rows;
        for (const auto& window : report.windows) {
          py::dict row;
          row["d"] = window.d;
          row["max"] = window.max;
          row["p50"] = window.p50;
          row["p99"] = window.p99;
          row["samples"] = window.samples;
          rows.append(row);
        }
        return py::make_tuple(rows, report.gamma_hat);
      },
      py::arg("flowdir"), py::arg("windows"), py::arg("samples") = 0, py::arg("seed") = 0,
      "first-far-cell statistics per window size; returns (rows, gamma_hat)");

  m.def("choose_subgrid_size", &choose_subgrid_size, py::arg("mem"), py::arg("block"));
  m.def("predicted_io_overhead", &predicted_io_overhead, py::arg("mem"), py::arg("block"));
  m.def(
      "predicted_tfp_io_volume",
      [](const std::string& scenario) {
        const auto p = predicted_tfp_io_volume(scenario == "pessimistic"
                                                   ? TfpScenario::Pessimistic
                                                   : TfpScenario::Optimistic);
        py::dict d;
        d["bytes_per_cell"] = p.bytes_per_cell;
        d["overhead_factor"] = p.overhead_factor;
        py::dict components;
        for (const auto& [name, bytes] : p.components) components[name.c_str()] = bytes;
        d["components"] = components;
        return d;
      },
      py::arg("scenario") = "optimistic");

  m.def(
      "read_grid",
      [](const std::string& path) -> py::object {
        const AnyGrid grid = read_grid(path);
        if (std::holds_alternative<FlowDirGrid>(grid))
          return flowdir_to_array(std::get<FlowDirGrid>(grid));
        if (std::holds_alternative<FlowAccGrid>(grid))
          return flowacc_to_array(std::get<FlowAccGrid>(grid));
        return elevation_to_array(std::get<ElevationGrid>(grid));
      },
      py::arg("path"), "load an .emg grid as a numpy array");
  m.def(
      "write_grid",
      [](const std::string& path, const py::array& array, Layout layout) {
        if (py::isinstance<py::array_t<std::uint8_t>>(array)) {
          FlowDirGrid fd = flowdir_from_array(array.cast<py::array_t<std::uint8_t>>());
          fd.layout = layout;
          write_grid(fd, path);
        } else if (py::isinstance<py::array_t<float>>(array)) {
          ElevationGrid elev = elevation_from_array(array.cast<py::array_t<float>>());
          elev.layout = layout;
          write_grid(elev, path);
        } else if (py::isinstance<py::array_t<std::uint64_t>>(array)) {
          const auto counts = array.cast<py::array_t<std::uint64_t>>();
          FlowAccGrid acc(GridDims{static_cast<std::uint64_t>(counts.shape(0)),
                                   static_cast<std::uint64_t>(counts.shape(1))},
                          layout);
          auto view = counts.unchecked<2>();
          for (std::uint64_t r = 0; r < acc.dims.height; ++r)
            for (std::uint64_t c = 0; c < acc.dims.width; ++c) acc.at(r, c) = view(r, c);
          write_grid(acc, path);
        } else {
          throw py::value_error("expected uint8 (flowdir), uint64 (flowacc) or float32 "
                                "(elevation) cells");
        }
      },
      py::arg("path"), py::arg("array"), py::arg("layout") = Layout::RowMajor,
      "write a numpy array as an .emg grid file");

  m.attr("SINK") = 0;
  m.attr("NODATA") = 255;
  m.attr("__version__") = "0.1.0";
}
