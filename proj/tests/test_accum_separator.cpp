#include "doctest.h"

#include <map>
#include <random>

#include "emgrid/accum_separator.hpp"
#include "emgrid/terrain.hpp"
#include "test_grids.hpp"

using namespace emgrid;

namespace {

const DeviceConfig kSmallDev{64, 2048, CachePolicy::LRUWithPinning};

AccumResult run_aware(const FlowDirGrid& fd, std::uint64_t z) {
  auto dev = make_flowdir_device(fd, kSmallDev);
  SeparatorOptions options;
  options.subgrid_side = z;
  return cache_aware_accumulation(dev, fd.dims, fd.layout, options);
}

AccumResult run_aware_z(const FlowDirGrid& fd, std::uint64_t z) {
  FlowDirGrid zfd = fd;
  zfd.layout = Layout::ZOrder;
  auto dev = make_flowdir_device(zfd, kSmallDev);
  SeparatorOptions options;
  options.subgrid_side = z;
  return cache_aware_accumulation_z(dev, zfd.dims, options);
}

AccumResult run_oblivious(const FlowDirGrid& fd, std::uint32_t base) {
  auto dev = make_flowdir_device(fd, kSmallDev);
  return cache_oblivious_accumulation(dev, fd.dims, fd.layout, base);
}

}  // namespace

TEST_CASE("choose_subgrid_size reproduces the reference parameter points") {
  CHECK_EQ(choose_subgrid_size(1ull << 30, 1ull << 14), 8637);
  CHECK_EQ(choose_subgrid_size(1ull << 30, 1ull << 16), 5330);
  const auto z = choose_subgrid_size(1ull << 20, 1ull << 10);
  CHECK_GE(z, 226);
  CHECK_LE(z, 228);
  // the chosen side always satisfies the exact block inequality
  for (const auto& [m, b] : {std::pair{1ull << 30, 1ull << 14},
                            std::pair{1ull << 30, 1ull << 16},
                            std::pair{1ull << 20, 1ull << 10}}) {
    const std::uint64_t side = choose_subgrid_size(m, b);
    const auto blocks = [&](std::uint64_t v) { return (v + b - 1) / b; };
    CHECK_LE(side * blocks(8 * side) + side * blocks(side) + 8 * blocks(8 * side), m / b);
  }
}

TEST_CASE("choose_subgrid_size rejects hopeless memories") {
  CHECK_THROWS_AS(choose_subgrid_size(32, 16), Error);
}

TEST_CASE("predicted_io_overhead matches the reference parameter points") {
  CHECK_EQ(doctest::Approx(predicted_io_overhead(1ull << 30, 1ull << 14)).epsilon(0.005),
           1.954);
  CHECK_EQ(doctest::Approx(predicted_io_overhead(1ull << 30, 1ull << 16)).epsilon(0.005),
           6.58);
  // vanishing block size approaches the scan floor of 10/9
  CHECK_EQ(doctest::Approx(predicted_io_overhead(1ull << 40, 2)).epsilon(1e-4), 10.0 / 9.0);
  CHECK_THROWS_AS(predicted_io_overhead(0, 16), Error);
}

TEST_CASE("cache-aware accumulation on a 1x4 chain") {
  const auto fd = testing::chain_east(4);
  for (std::uint64_t z : {3, 5, 17}) {
    const auto result = run_aware(fd, z);
    CHECK_EQ(result.acc.cells, std::vector<std::uint64_t>{1, 2, 3, 4});
  }
}

TEST_CASE("cache-aware equals the oracle on random grids") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const GridDims dims{2 + rng() % 96, 2 + rng() % 96};
    const auto fd = testing::random_acyclic_grid(dims, rng(), trial % 3 * 0.25);
    const auto expected = brute_force_accumulation(fd);
    for (std::uint64_t z : {5, 9, 17}) {
      const auto result = run_aware(fd, z);
      CHECK(result.acc.cells == expected.cells);
    }
  }
}

TEST_CASE("cache-aware works on z-order payloads too") {
  std::mt19937_64 rng(42);
  const auto fd = testing::random_acyclic_grid(GridDims{37, 53}, rng(), 0.15,
                                               Layout::ZOrder);
  const auto expected = brute_force_accumulation(fd);
  const auto result = run_aware(fd, 9);
  CHECK(result.acc.cells == expected.cells);
}

TEST_CASE("separator flow after phase one sits at the first separator hit") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    const GridDims dims{2 + rng() % 30, 2 + rng() % 30};
    const auto fd = testing::random_acyclic_grid(dims, rng(), 0.1);
    const std::uint64_t z = 5;

    auto dev = make_flowdir_device(fd, kSmallDev);
    SeparatorOptions options;
    options.subgrid_side = z;
    SeparatorDebug debug;
    cache_aware_accumulation(dev, fd.dims, fd.layout, options, &debug);

    // oracle: walk each non-separator cell to its first separator hit
    auto is_sep = [&](CellRef c) {
      return c.row % (z - 1) == 0 || c.row == dims.height - 1 ||
             c.col % (z - 1) == 0 || c.col == dims.width - 1;
    };
    std::map<std::pair<std::uint64_t, std::uint64_t>, std::uint64_t> expect;
    for (std::uint64_t i = 0; i < debug.s_cells.size(); ++i) {
      const CellRef c = debug.s_cells[i];
      expect[{c.row, c.col}] = fd.at(c) == Direction::NoData ? 0 : 1;
    }
    for (std::uint64_t r = 0; r < dims.height; ++r)
      for (std::uint64_t c = 0; c < dims.width; ++c) {
        CellRef cur{r, c};
        if (is_sep(cur) || fd.at(cur) == Direction::NoData) continue;
        while (true) {
          const auto nb = out_neighbor(fd, cur);
          if (!nb) break;
          cur = *nb;
          if (is_sep(cur)) {
            ++expect[{cur.row, cur.col}];
            break;
          }
        }
      }
    for (std::uint64_t i = 0; i < debug.s_cells.size(); ++i) {
      const CellRef c = debug.s_cells[i];
      CHECK_EQ(debug.s_after_phase1[i], expect[{c.row, c.col}]);
    }
  }
}

TEST_CASE("phase two overflow respects the budget") {
  const auto fd = testing::random_acyclic_grid(GridDims{40, 40}, 1, 0.0);
  auto dev = make_flowdir_device(fd, kSmallDev);
  SeparatorOptions options;
  options.subgrid_side = 5;
  options.s_budget_bytes = 64;
  CHECK_THROWS_AS(cache_aware_accumulation(dev, fd.dims, fd.layout, options), Error);
}

TEST_CASE("z-order variant equals the oracle") {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 25; ++trial) {
    const GridDims dims{2 + rng() % 80, 2 + rng() % 80};
    const auto fd = testing::random_acyclic_grid(dims, rng(), trial % 3 * 0.2);
    const auto expected = brute_force_accumulation(fd);
    for (std::uint64_t z : {4, 8, 16}) {
      const auto result = run_aware_z(fd, z);
      CHECK(result.acc.cells == expected.cells);
    }
  }
}

TEST_CASE("disjoint subgrids have at most eight times the shared separator cells") {
  for (const auto dims : {GridDims{257, 123}, GridDims{300, 300}}) {
    for (std::uint64_t z : {8, 16, 32}) {
      const std::uint64_t shared = separator_cell_count(dims, z);
      const std::uint64_t disjoint = separator_cell_count_z(dims, z);
      CHECK_LE(disjoint, 8 * shared);
    }
  }
}

TEST_CASE("cache-oblivious accumulation on a 1x4 chain") {
  const auto fd = testing::chain_east(4);
  for (std::uint32_t base : {2u, 17u}) {
    const auto result = run_oblivious(fd, base);
    CHECK_EQ(result.acc.cells, std::vector<std::uint64_t>{1, 2, 3, 4});
  }
}

TEST_CASE("cache-oblivious equals the oracle") {
  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 20; ++trial) {
    const GridDims dims{2 + rng() % 120, 2 + rng() % 120};
    const auto fd = testing::random_acyclic_grid(dims, rng(), trial % 3 * 0.2);
    const auto expected = brute_force_accumulation(fd);
    for (std::uint32_t base : {2u, 17u}) {
      const auto result = run_oblivious(fd, base);
      CHECK(result.acc.cells == expected.cells);
    }
  }
}

TEST_CASE("cache-oblivious works on z-order payloads") {
  std::mt19937_64 rng(46);
  FlowDirGrid fd = testing::random_acyclic_grid(GridDims{33, 61}, rng(), 0.1,
                                                Layout::ZOrder);
  const auto expected = brute_force_accumulation(fd);
  const auto result = run_oblivious(fd, 5);
  CHECK(result.acc.cells == expected.cells);
}

TEST_CASE("cache-oblivious rejects base sides off the hierarchy") {
  const auto fd = testing::chain_east(4);
  auto dev = make_flowdir_device(fd, kSmallDev);
  CHECK_THROWS_AS(cache_oblivious_accumulation(dev, fd.dims, fd.layout, 4), Error);
  CHECK_THROWS_AS(cache_oblivious_accumulation(dev, fd.dims, fd.layout, 0), Error);
}

TEST_CASE("pointer records stay within the per-cell budget") {
  std::mt19937_64 rng(47);
  const auto fd = testing::random_acyclic_grid(GridDims{129, 129}, rng(), 0.0);
  const std::uint64_t n = fd.dims.cell_count();
  const auto base2 = run_oblivious(fd, 2);
  CHECK_LE(base2.pointer_records, 3 * n);
  const auto base17 = run_oblivious(fd, 17);
  CHECK_LE(base17.pointer_records, n / 2);
  CHECK_LT(base17.pointer_records, base2.pointer_records);
}

TEST_CASE("z-order variant stays near the input+output size at desk scale") {
  const std::uint64_t mem = 1 << 20, block = 1 << 12;
  const auto terrain = gen_meander(MeanderParams{1024, 0.125, 0.25});
  FlowDirGrid fd = terrain.fd;
  fd.layout = Layout::ZOrder;
  auto dev = make_flowdir_device(fd, DeviceConfig{block, mem, CachePolicy::LRUWithPinning});
  const auto result = cache_aware_accumulation_z(dev, fd.dims);
  const double inout = 9.0 * static_cast<double>(fd.dims.cell_count());
  CHECK_LE(static_cast<double>(result.stats.io_volume()), 1.5 * inout);
}

TEST_CASE("degenerate grid shapes work across every variant") {
  std::mt19937_64 rng(48);
  for (const auto dims : {GridDims{1, 1}, GridDims{1, 7}, GridDims{7, 1}, GridDims{2, 2}}) {
    const auto fd = testing::random_acyclic_grid(dims, rng(), 0.0);
    const auto expected = brute_force_accumulation(fd);
    CHECK(run_aware(fd, 3).acc.cells == expected.cells);
    CHECK(run_aware_z(fd, 2).acc.cells == expected.cells);
    CHECK(run_oblivious(fd, 2).acc.cells == expected.cells);
    CHECK(run_oblivious(fd, 17).acc.cells == expected.cells);
  }
}
