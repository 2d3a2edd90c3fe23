// emg: generate, convert, accumulate, flood and measure grid terrains on a
// simulated block device.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "emgrid/accum_naive.hpp"
#include "emgrid/accum_separator.hpp"
#include "emgrid/accum_tfp.hpp"
#include "emgrid/convert.hpp"
#include "emgrid/flood.hpp"
#include "emgrid/grid_io.hpp"
#include "emgrid/terrain.hpp"

namespace {

using namespace emgrid;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitMismatch = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

// Sizes and counts: plain integers, binary suffixes (k/M/G) or 2^n.
std::uint64_t parse_size(const std::string& text) {
  if (text.empty()) throw CLI::ValidationError("empty size");
  if (text.rfind("2^", 0) == 0) {
    const int exp = std::stoi(text.substr(2));
    if (exp < 0 || exp > 62) throw CLI::ValidationError("exponent out of range: " + text);
    return 1ull << exp;
  }
  std::size_t used = 0;
  const std::uint64_t value = std::stoull(text, &used);
  if (used == text.size()) return value;
  if (used + 1 != text.size()) throw CLI::ValidationError("bad size: " + text);
  switch (std::tolower(text[used])) {
    case 'k': return value << 10;
    case 'm': return value << 20;
    case 'g': return value << 30;
    default: throw CLI::ValidationError("bad size suffix: " + text);
  }
}

// "a,b,c" of sizes, or "lo..hi" doubling from lo to hi.
std::vector<std::uint64_t> parse_size_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const std::uint64_t lo = parse_size(text.substr(0, dots));
    const std::uint64_t hi = parse_size(text.substr(dots + 2));
    for (std::uint64_t v = lo; v <= hi; v *= 2) out.push_back(v);
    return out;
  }
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto piece = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (!piece.empty()) out.push_back(parse_size(piece));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::uint64_t default_seed(std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("EMG_SEED")) return std::stoull(env);
  return 63543;
}

json stats_json(const IoStats& s) {
  return json{{"block_reads", s.block_reads},
              {"block_writes", s.block_writes},
              {"block_bytes", s.block_bytes},
              {"io_volume", s.io_volume()},
              {"peak_pinned_bytes", s.peak_pinned_bytes}};
}

struct Manifest {
  std::string command;
  json parameters = json::object();
  std::vector<std::string> inputs, outputs;
  std::optional<std::uint64_t> seed;
  std::optional<IoStats> stats;
  double wall_ms = 0;

  void write_beside(const std::filesystem::path& primary_output) const {
    json doc{{"command", command},
             {"parameters", parameters},
             {"inputs", inputs},
             {"outputs", outputs},
             {"wall_time_ms", wall_ms}};
    if (seed) doc["seed"] = *seed;
    if (stats) doc["io_stats"] = stats_json(*stats);
    std::ofstream out(primary_output.string() + ".manifest.json");
    out << doc.dump(2) << "\n";
  }
};

class Stopwatch {
public:
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string csv_header() {
  return "algorithm,layout,n_cells,memory_bytes,block_bytes,block_reads,block_writes,"
         "io_volume,volume_per_inout";
}

std::string csv_row(const std::string& algo, Layout layout, std::uint64_t n,
                    const DeviceConfig& config, const IoStats& stats,
                    std::uint64_t inout_bytes) {
  const double factor =
      inout_bytes ? static_cast<double>(stats.io_volume()) / static_cast<double>(inout_bytes)
                  : 0.0;
  char factor_text[32];
  std::snprintf(factor_text, sizeof factor_text, "%.4f", factor);
  return algo + "," + (layout == Layout::ZOrder ? "z" : "row") + "," + std::to_string(n) +
         "," + std::to_string(config.memory_bytes) + "," +
         std::to_string(config.block_bytes) + "," + std::to_string(stats.block_reads) +
         "," + std::to_string(stats.block_writes) + "," +
         std::to_string(stats.io_volume()) + "," + factor_text;
}

FlowDirGrid load_flowdir(const std::filesystem::path& path) {
  auto grid = read_grid(path);
  if (!std::holds_alternative<FlowDirGrid>(grid))
    throw Error(errc::bad_header, path.string() + " is not a flow-direction grid");
  auto fd = std::get<FlowDirGrid>(std::move(grid));
  const std::uint64_t fixed = normalize_to_sinks(fd);
  if (fixed > 0)
    std::cerr << "note: normalized " << fixed << " off-grid or nodata-pointing cells to sinks\n";
  return fd;
}

ElevationGrid load_elevation(const std::filesystem::path& path) {
  auto grid = read_grid(path);
  if (!std::holds_alternative<ElevationGrid>(grid))
    throw Error(errc::bad_header, path.string() + " is not an elevation grid");
  return std::get<ElevationGrid>(std::move(grid));
}

DeviceConfig make_config(std::uint64_t mem, std::uint64_t block, bool pinning) {
  DeviceConfig config;
  config.block_bytes = block;
  config.memory_bytes = std::max(mem, 2 * block);
  config.policy = pinning ? CachePolicy::LRUWithPinning : CachePolicy::LRU;
  return config;
}

BlockDevice make_device(std::span<const std::byte> payload, const DeviceConfig& config,
                        bool simulate) {
  if (simulate) {
    auto dev = BlockDevice::in_memory(payload.size(), config);
    dev.raw_write(0, payload);
    return dev;
  }
  // real runs use a file-backed device with a generous cache; only wall
  // time is meaningful
  DeviceConfig relaxed = config;
  relaxed.memory_bytes = std::max<std::uint64_t>(relaxed.memory_bytes, 256ull << 20);
  relaxed.memory_bytes -= relaxed.memory_bytes % relaxed.block_bytes;
  const auto path = std::filesystem::temp_directory_path() /
                    ("emg_device_" + std::to_string(std::random_device{}()) + ".bin");
  auto dev = BlockDevice::file_backed(path, payload.size(), relaxed);
  // the open handle keeps the backing alive; no file is left behind
  std::filesystem::remove(path);
  dev.raw_write(0, payload);
  return dev;
}

struct AccumulateRun {
  AccumResult result;
  Layout layout;
};

AccumulateRun run_accumulation(const std::string& algo, const FlowDirGrid& fd,
                               const DeviceConfig& config, bool simulate,
                               std::uint32_t base_side, std::uint64_t s_budget,
                               std::uint64_t pq_budget) {
  const auto payload = payload_bytes(fd);
  auto dev = make_device(payload, config, simulate);
  AccumulateRun run{.result = {}, .layout = fd.layout};

  if (algo == "naive-row") {
    run.result = naive_accumulation(dev, fd.dims, fd.layout, TraversalOrder::RowByRow);
  } else if (algo == "naive-z") {
    run.result = naive_accumulation(dev, fd.dims, fd.layout, TraversalOrder::ZOrderTraversal);
  } else if (algo == "sep-aware") {
    SeparatorOptions options;
    options.s_budget_bytes = s_budget;
    run.result = cache_aware_accumulation(dev, fd.dims, fd.layout, options);
  } else if (algo == "sep-aware-z") {
    if (fd.layout != Layout::ZOrder)
      throw CLI::ValidationError("sep-aware-z needs a Z-order input file");
    SeparatorOptions options;
    options.s_budget_bytes = s_budget;
    run.result = cache_aware_accumulation_z(dev, fd.dims, options);
  } else if (algo == "sep-oblivious") {
    run.result = cache_oblivious_accumulation(dev, fd.dims, fd.layout, base_side);
  } else if (algo == "tfp") {
    const auto topo = topological_numbering(fd);
    TfpOptions options;
    options.pq_budget_bytes = pq_budget;
    run.result = tfp_accumulation(dev, fd.dims, fd.layout, topo, options);
  } else {
    throw CLI::ValidationError("unknown algorithm " + algo);
  }
  return run;
}

FlowDirGrid with_layout(FlowDirGrid fd, Layout layout) {
  fd.layout = layout;
  return fd;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"external-memory grid hydrology toolkit"};
  app.require_subcommand(1);

  // ---- gen ----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "generate synthetic terrains");
  std::string gen_kind = "drainage", gen_out, gen_elev_out, gen_dims = "256x256",
              gen_layout = "row";
  std::uint64_t gen_n = 256;
  double gen_c1 = 0.125, gen_c2 = 0.25;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--kind", gen_kind, "meander|drainage")->required();
  gen->add_option("--out", gen_out, "output flow-direction file")->required();
  gen->add_option("--elev-out", gen_elev_out, "also write the elevation field (meander)");
  gen->add_option("--n", gen_n, "grid side for meander terrains");
  gen->add_option("--dims", gen_dims, "HxW for drainage terrains");
  gen->add_option("--c1", gen_c1, "meander count coefficient");
  gen->add_option("--c2", gen_c2, "meander amplitude coefficient");
  gen->add_option("--seed", gen_seed, "rng seed (EMG_SEED overrides the default)");
  gen->add_option("--layout", gen_layout, "row|z output layout");

  // ---- convert -------------------------------------------------------------
  auto* convert = app.add_subcommand("convert", "rewrite a grid file between layouts");
  std::string conv_in, conv_out, conv_to = "z", conv_strategy = "zscan";
  std::string conv_mem = "2^20", conv_block = "2^12";
  bool conv_simulate = false;
  convert->add_option("--in", conv_in)->required();
  convert->add_option("--out", conv_out)->required();
  convert->add_option("--to", conv_to, "row|z target layout");
  convert->add_option("--strategy", conv_strategy, "zscan|rowscan|mergesort");
  convert->add_option("--mem", conv_mem, "simulated memory M");
  convert->add_option("--block", conv_block, "simulated block size B");
  convert->add_flag("--simulate", conv_simulate, "run on the counting device");

  // ---- accumulate ----------------------------------------------------------
  auto* accumulate = app.add_subcommand("accumulate", "compute flow accumulation");
  std::string acc_algo, acc_in, acc_out, acc_stats_out;
  std::string acc_mem = "2^20", acc_block = "2^12", acc_s_budget = "1g",
              acc_pq_budget = "0";
  std::uint64_t acc_base = 17;
  bool acc_simulate = false;
  accumulate->add_option("--algo", acc_algo,
                         "naive-row|naive-z|sep-aware|sep-aware-z|sep-oblivious|tfp")
      ->required();
  accumulate->add_option("--in", acc_in)->required();
  accumulate->add_option("--out", acc_out)->required();
  accumulate->add_option("--mem", acc_mem, "simulated memory M");
  accumulate->add_option("--block", acc_block, "simulated block size B");
  accumulate->add_option("--base", acc_base, "cache-oblivious base subgrid side");
  accumulate->add_option("--s-budget", acc_s_budget, "phase-two memory budget");
  accumulate->add_option("--pq-budget", acc_pq_budget,
                         "tfp queue budget; 0 keeps the queue in memory");
  accumulate->add_option("--stats-out", acc_stats_out, "append the stats CSV row here");
  accumulate->add_flag("--simulate", acc_simulate, "run on the counting device");

  // ---- flood ---------------------------------------------------------------
  auto* flood = app.add_subcommand("flood", "raise elevations to drain every cell");
  std::string flood_algo = "watershed", flood_in, flood_out;
  std::string flood_mem = "2^20", flood_block = "2^12";
  bool flood_simulate = false;
  flood->add_option("--algo", flood_algo, "watershed|separator");
  flood->add_option("--in", flood_in)->required();
  flood->add_option("--out", flood_out)->required();
  flood->add_option("--mem", flood_mem);
  flood->add_option("--block", flood_block);
  flood->add_flag("--simulate", flood_simulate);

  // ---- confluence ----------------------------------------------------------
  auto* confluence = app.add_subcommand("confluence", "estimate the confluence constant");
  std::string confl_in, confl_d = "4,8,16,32", confl_out;
  std::uint64_t confl_sample = 0;
  std::optional<std::uint64_t> confl_seed;
  confluence->add_option("--in", confl_in)->required();
  confluence->add_option("--d", confl_d, "window sizes");
  confluence->add_option("--sample", confl_sample, "placements per window (0 = all)");
  confluence->add_option("--seed", confl_seed);
  confluence->add_option("--out", confl_out, "CSV output path (default stdout)");

  // ---- verify --------------------------------------------------------------
  auto* verify = app.add_subcommand("verify", "recompute with the oracles and compare");
  std::string ver_flowdir, ver_acc, ver_elev, ver_flooded;
  verify->add_option("--flowdir", ver_flowdir);
  verify->add_option("--acc", ver_acc);
  verify->add_option("--elev", ver_elev);
  verify->add_option("--flooded", ver_flooded);

  // ---- bench ---------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "sweep algorithms over terrain sizes");
  std::string bench_algos = "naive-row,naive-z,sep-aware,tfp", bench_terrain = "meander";
  std::string bench_n = "2^16..2^20", bench_mem = "2^20", bench_block = "2^12",
              bench_out;
  double bench_c1 = 0.125, bench_c2 = 0.25;
  std::optional<std::uint64_t> bench_seed;
  bench->add_option("--algos", bench_algos, "comma-separated algorithm list");
  bench->add_option("--terrain", bench_terrain, "meander|drainage");
  bench->add_option("--n", bench_n, "cell counts, e.g. 2^18..2^22 or a,b,c");
  bench->add_option("--mem", bench_mem);
  bench->add_option("--block", bench_block);
  bench->add_option("--c1", bench_c1);
  bench->add_option("--c2", bench_c2);
  bench->add_option("--seed", bench_seed);
  bench->add_option("--out", bench_out, "CSV output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    Stopwatch watch;

    if (gen->parsed()) {
      const Layout layout = gen_layout == "z" ? Layout::ZOrder : Layout::RowMajor;
      Manifest manifest;
      manifest.command = "gen";
      manifest.outputs.push_back(gen_out);
      if (gen_kind == "meander") {
        MeanderParams params{gen_n, gen_c1, gen_c2};
        auto terrain = gen_meander(params);
        terrain.fd.layout = layout;
        write_grid(terrain.fd, gen_out);
        if (!gen_elev_out.empty()) {
          terrain.elev.layout = layout;
          write_grid(terrain.elev, gen_elev_out);
          manifest.outputs.push_back(gen_elev_out);
        }
        manifest.parameters = {{"kind", "meander"}, {"n", gen_n},       {"c1", gen_c1},
                               {"c2", gen_c2},      {"river_cells", terrain.river_cells},
                               {"layout", gen_layout}};
      } else if (gen_kind == "drainage") {
        const auto x = gen_dims.find('x');
        if (x == std::string::npos) throw CLI::ValidationError("--dims must look like HxW");
        const GridDims dims{parse_size(gen_dims.substr(0, x)),
                            parse_size(gen_dims.substr(x + 1))};
        const std::uint64_t seed = default_seed(gen_seed);
        auto fd = gen_random_drainage(dims, seed);
        fd.layout = layout;
        write_grid(fd, gen_out);
        manifest.seed = seed;
        manifest.parameters = {{"kind", "drainage"},
                               {"height", dims.height},
                               {"width", dims.width},
                               {"layout", gen_layout}};
      } else {
        throw CLI::ValidationError("unknown terrain kind " + gen_kind);
      }
      manifest.wall_ms = watch.elapsed_ms();
      manifest.write_beside(gen_out);
      return kExitOk;
    }

    if (convert->parsed()) {
      const Layout target = conv_to == "z" ? Layout::ZOrder : Layout::RowMajor;
      auto grid = read_grid(conv_in);
      Manifest manifest;
      manifest.command = "convert";
      manifest.inputs.push_back(conv_in);
      manifest.outputs.push_back(conv_out);
      manifest.parameters = {{"to", conv_to}, {"strategy", conv_strategy},
                             {"simulate", conv_simulate}};

      if (conv_simulate) {
        const Layout source = std::visit([](const auto& g) { return g.layout; }, grid);
        if (source == target)
          throw CLI::ValidationError("input already has the requested layout");
        ConversionStrategy strategy;
        if (conv_strategy == "zscan") strategy = ConversionStrategy::ZOrderScan;
        else if (conv_strategy == "rowscan") strategy = ConversionStrategy::RowByRowScan;
        else if (conv_strategy == "mergesort") strategy = ConversionStrategy::MergeSort;
        else throw CLI::ValidationError("unknown strategy " + conv_strategy);

        const auto config = make_config(parse_size(conv_mem), parse_size(conv_block), false);
        const auto dims = std::visit([](const auto& g) { return g.dims; }, grid);
        const auto kind = grid_kind(grid);
        const auto payload = payload_bytes(grid);
        auto src = BlockDevice::in_memory(payload.size(), config);
        src.raw_write(0, payload);
        auto dst = BlockDevice::in_memory(payload.size(), config);
        const IoStats stats = convert_layout(
            src, dst, dims, cell_size_bytes(kind), strategy,
            target == Layout::ZOrder ? ConvertDirection::RowToZ : ConvertDirection::ZToRow);

        std::vector<std::byte> out(payload.size());
        dst.raw_read(0, out);
        AnyGrid converted;
        switch (kind) {
          case GridKind::FlowDir: converted = flowdir_from_payload(dims, target, out); break;
          case GridKind::FlowAcc: converted = flowacc_from_payload(dims, target, out); break;
          case GridKind::Elevation:
            converted = elevation_from_payload(dims, target, out);
            break;
        }
        write_grid(converted, conv_out);
        manifest.stats = stats;
        std::cout << csv_header() << "\n"
                  << csv_row("convert-" + conv_strategy, target, dims.cell_count(), config,
                             stats, 2 * payload.size())
                  << "\n";
      } else {
        std::visit(
            [&](auto& g) {
              g.layout = target;
              write_grid(g, conv_out);
            },
            grid);
      }
      manifest.wall_ms = watch.elapsed_ms();
      manifest.write_beside(conv_out);
      return kExitOk;
    }

    if (accumulate->parsed()) {
      const std::set<std::string> known = {"naive-row",   "naive-z",       "sep-aware",
                                           "sep-aware-z", "sep-oblivious", "tfp"};
      if (!known.contains(acc_algo))
        throw CLI::ValidationError("unknown algorithm " + acc_algo);
      const auto fd = load_flowdir(acc_in);
      if (const auto witness = validate_acyclic(fd)) {
        std::cerr << "error: flow directions contain a cycle through (" << witness->row
                  << ", " << witness->col << ")\n";
        return kExitData;
      }
      const bool pinning = acc_algo == "sep-aware" || acc_algo == "sep-aware-z";
      const auto config =
          make_config(parse_size(acc_mem), parse_size(acc_block), pinning);
      const std::uint64_t pq_budget = parse_size(acc_pq_budget);
      const auto run = run_accumulation(acc_algo, fd, config, acc_simulate,
                                        static_cast<std::uint32_t>(acc_base),
                                        parse_size(acc_s_budget),
                                        pq_budget == 0 ? ~0ull : pq_budget);
      FlowAccGrid out = run.result.acc;
      out.layout = fd.layout;
      write_grid(out, acc_out);

      const std::uint64_t inout = 9 * fd.dims.cell_count();
      const std::string row =
          csv_row(acc_algo, fd.layout, fd.dims.cell_count(), config,
                  acc_simulate ? run.result.stats : IoStats{}, inout);
      if (acc_simulate) {
        std::cout << csv_header() << "\n" << row << "\n";
        if (!acc_stats_out.empty()) {
          const bool fresh = !std::filesystem::exists(acc_stats_out);
          std::ofstream stats_file(acc_stats_out, std::ios::app);
          if (fresh) stats_file << csv_header() << "\n";
          stats_file << row << "\n";
        }
      } else {
        std::cout << "wall_time_ms," << watch.elapsed_ms() << "\n";
      }

      Manifest manifest;
      manifest.command = "accumulate";
      manifest.inputs.push_back(acc_in);
      manifest.outputs.push_back(acc_out);
      manifest.parameters = {{"algo", acc_algo},
                             {"memory_bytes", config.memory_bytes},
                             {"block_bytes", config.block_bytes},
                             {"base", acc_base},
                             {"simulate", acc_simulate}};
      if (acc_simulate) manifest.stats = run.result.stats;
      manifest.wall_ms = watch.elapsed_ms();
      manifest.write_beside(acc_out);
      return kExitOk;
    }

    if (flood->parsed()) {
      const auto elev = load_elevation(flood_in);
      Manifest manifest;
      manifest.command = "flood";
      manifest.inputs.push_back(flood_in);
      manifest.outputs.push_back(flood_out);
      manifest.parameters = {{"algo", flood_algo}, {"simulate", flood_simulate}};

      ElevationGrid flooded;
      if (flood_algo == "watershed") {
        flooded = flood_watershed(elev);
      } else if (flood_algo == "separator") {
        const auto config =
            make_config(parse_size(flood_mem), parse_size(flood_block), false);
        const auto payload = payload_bytes(elev);
        auto dev = make_device(payload, config, flood_simulate);
        auto result = separator_flooding(dev, elev.dims, elev.layout, {});
        flooded = std::move(result.flooded);
        if (flood_simulate) {
          manifest.stats = result.stats;
          std::cout << csv_header() << "\n"
                    << csv_row("flood-separator", elev.layout, elev.dims.cell_count(),
                               config, result.stats, 8 * elev.dims.cell_count())
                    << "\n";
        }
      } else {
        throw CLI::ValidationError("unknown flooding algorithm " + flood_algo);
      }
      flooded.layout = elev.layout;
      write_grid(flooded, flood_out);
      manifest.wall_ms = watch.elapsed_ms();
      manifest.write_beside(flood_out);
      return kExitOk;
    }

    if (confluence->parsed()) {
      const auto fd = load_flowdir(confl_in);
      ConfluenceSampling sampling;
      sampling.max_samples_per_window = confl_sample;
      sampling.seed = default_seed(confl_seed);
      const auto windows = parse_size_list(confl_d);
      const auto report = estimate_confluence(fd, windows, sampling);

      std::string csv = "d,max,p50,p99,samples\n";
      for (const auto& window : report.windows)
        csv += std::to_string(window.d) + "," + std::to_string(window.max) + "," +
               std::to_string(window.p50) + "," + std::to_string(window.p99) + "," +
               std::to_string(window.samples) + "\n";
      if (confl_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream(confl_out) << csv;
        Manifest manifest;
        manifest.command = "confluence";
        manifest.inputs.push_back(confl_in);
        manifest.outputs.push_back(confl_out);
        manifest.seed = sampling.seed;
        manifest.parameters = {{"d", confl_d}, {"sample", confl_sample}};
        manifest.wall_ms = watch.elapsed_ms();
        manifest.write_beside(confl_out);
      }
      std::cerr << "gamma_hat," << report.gamma_hat << "\n";
      return kExitOk;
    }

    if (verify->parsed()) {
      if (!ver_flowdir.empty() && !ver_acc.empty()) {
        const auto fd = load_flowdir(ver_flowdir);
        if (validate_acyclic(fd)) {
          std::cerr << "error: flow directions contain a cycle\n";
          return kExitData;
        }
        const auto claimed = read_grid(ver_acc);
        if (!std::holds_alternative<FlowAccGrid>(claimed)) {
          std::cerr << "error: " << ver_acc << " is not a flow accumulation grid\n";
          return kExitData;
        }
        const auto expect = brute_force_accumulation(fd);
        const auto& got = std::get<FlowAccGrid>(claimed);
        if (!(got.dims == expect.dims) || got.cells != expect.cells) {
          std::cout << "MISMATCH\n";
          return kExitMismatch;
        }
        std::cout << "OK\n";
        return kExitOk;
      }
      if (!ver_elev.empty() && !ver_flooded.empty()) {
        const auto elev = load_elevation(ver_elev);
        const auto claimed = load_elevation(ver_flooded);
        const auto expect = brute_force_flood(elev);
        bool equal = claimed.dims == expect.dims;
        for (std::size_t i = 0; equal && i < expect.cells.size(); ++i) {
          if (is_nodata(expect.cells[i]) != is_nodata(claimed.cells[i]))
            equal = false;
          else if (!is_nodata(expect.cells[i]) && expect.cells[i] != claimed.cells[i])
            equal = false;
        }
        std::cout << (equal ? "OK" : "MISMATCH") << "\n";
        return equal ? kExitOk : kExitMismatch;
      }
      std::cerr << "verify needs --flowdir with --acc, or --elev with --flooded\n";
      return kExitUsage;
    }

    if (bench->parsed()) {
      const auto config = make_config(parse_size(bench_mem), parse_size(bench_block), true);
      const std::uint64_t seed = default_seed(bench_seed);
      std::vector<std::string> algos;
      for (std::size_t pos = 0; pos <= bench_algos.size();) {
        const auto comma = bench_algos.find(',', pos);
        algos.push_back(bench_algos.substr(
            pos, comma == std::string::npos ? comma : comma - pos));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }

      std::string csv = csv_header() + "\n";
      for (const std::uint64_t cells : parse_size_list(bench_n)) {
        const auto side = static_cast<std::uint64_t>(std::llround(std::sqrt(
            static_cast<double>(cells))));
        FlowDirGrid fd;
        if (bench_terrain == "meander") {
          fd = gen_meander(MeanderParams{side, bench_c1, bench_c2}).fd;
        } else if (bench_terrain == "drainage") {
          fd = gen_random_drainage(GridDims{side, side}, seed);
        } else {
          throw CLI::ValidationError("unknown terrain " + bench_terrain);
        }
        for (const auto& algo : algos) {
          const bool wants_z = algo == "naive-z" || algo == "sep-aware-z";
          const auto grid = with_layout(fd, wants_z ? Layout::ZOrder : Layout::RowMajor);
          DeviceConfig run_config = config;
          run_config.policy = (algo == "sep-aware" || algo == "sep-aware-z")
                                  ? CachePolicy::LRUWithPinning
                                  : CachePolicy::LRU;
          const auto run = run_accumulation(algo, grid, run_config, true, 17,
                                            1ull << 30, ~0ull);
          csv += csv_row(algo, grid.layout, grid.dims.cell_count(), run_config,
                         run.result.stats, 9 * grid.dims.cell_count()) +
                 "\n";
          std::cerr << "bench: " << algo << " n=" << grid.dims.cell_count() << " done\n";
        }
      }
      if (bench_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream(bench_out) << csv;
        Manifest manifest;
        manifest.command = "bench";
        manifest.outputs.push_back(bench_out);
        manifest.seed = seed;
        manifest.parameters = {{"algos", bench_algos},
                               {"terrain", bench_terrain},
                               {"n", bench_n},
                               {"memory_bytes", config.memory_bytes},
                               {"block_bytes", config.block_bytes}};
        manifest.wall_ms = watch.elapsed_ms();
        manifest.write_beside(bench_out);
      }
      return kExitOk;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
