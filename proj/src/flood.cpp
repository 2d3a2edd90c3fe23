#include "emgrid/flood.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <queue>
#include <unordered_map>
#include <vector>

#include "emgrid/grid_io.hpp"
#include "emgrid/zorder.hpp"

namespace emgrid {

namespace {

constexpr std::uint64_t kNone = ~0ull;
constexpr float kInf = std::numeric_limits<float>::infinity();

}  // namespace

FlowDirGrid steepest_descent_directions(const ElevationGrid& elev) {
  const GridDims dims = elev.dims;
  FlowDirGrid fd(dims, elev.layout, Direction::Sink);
  for (std::uint64_t r = 0; r < dims.height; ++r) {
    for (std::uint64_t c = 0; c < dims.width; ++c) {
      const float here = elev.at(r, c);
      if (is_nodata(here)) {
        fd.at(r, c) = Direction::NoData;
        continue;
      }
      Direction best = Direction::Sink;
      float best_drop = here;
      for (Direction d : kFlowDirections) {
        const auto nb = out_neighbor(dims, CellRef{r, c}, d);
        if (!nb) continue;
        const float there = elev.at(*nb);
        if (is_nodata(there)) continue;
        if (there < best_drop) {
          best_drop = there;
          best = d;
        }
      }
      fd.at(r, c) = best;
    }
  }
  return fd;
}

WatershedLabels watershed_decompose(const FlowDirGrid& fd, TraversalOrder order) {
  const GridDims dims = fd.dims;
  const std::uint64_t n = dims.cell_count();
  const std::uint64_t w = dims.width;

  WatershedLabels labels;
  labels.dims = dims;
  labels.sink_of.assign(n, kNone);

  SegmentTables tables;
  if (order == TraversalOrder::ZOrderTraversal) tables = SegmentTables::build(dims);

  std::vector<std::uint64_t> path;
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t start = i;
    if (order == TraversalOrder::ZOrderTraversal) {
      const CellRef c = tables.cell_at(i);
      start = c.row * w + c.col;
    }
    if (fd.cells[start] == Direction::NoData || labels.sink_of[start] != kNone) continue;
    path.clear();
    std::uint64_t cur = start;
    while (true) {
      if (labels.sink_of[cur] != kNone) break;
      path.push_back(cur);
      const Direction d = fd.cells[cur];
      if (!is_flow(d)) break;
      const auto nb = out_neighbor(dims, CellRef{cur / w, cur % w}, d);
      if (!nb) break;
      cur = nb->row * w + nb->col;
    }
    const std::uint64_t sink =
        labels.sink_of[cur] != kNone ? labels.sink_of[cur] : cur;
    for (std::uint64_t cell : path) labels.sink_of[cell] = sink;
  }

  for (std::uint64_t i = 0; i < n; ++i)
    if (labels.sink_of[i] == i) labels.sinks.push_back(i);
  return labels;
}

WatershedGraph build_watershed_graph(const WatershedLabels& labels,
                                     const ElevationGrid& elev) {
  const GridDims dims = elev.dims;
  const std::uint64_t w = dims.width;

  WatershedGraph graph;
  graph.sinks = labels.sinks;
  std::unordered_map<std::uint64_t, std::uint32_t> node_of;
  for (std::uint32_t i = 0; i < graph.sinks.size(); ++i) node_of[graph.sinks[i]] = i;

  std::unordered_map<std::uint64_t, float> best;  // packed (u,v) -> lowest pass
  auto note_edge = [&](std::uint32_t u, std::uint32_t v, float height) {
    if (u == v) return;
    if (u > v) std::swap(u, v);
    const std::uint64_t key = (static_cast<std::uint64_t>(u) << 32) | v;
    auto [it, inserted] = best.emplace(key, height);
    if (!inserted && height < it->second) it->second = height;
  };
  std::vector<float> outside(graph.sinks.size(), kInf);

  // Pairs scanned once via the four forward directions; grid-edge and
  // NoData-adjacent cells escape outside at their own elevation.
  constexpr Direction kForward[] = {Direction::E, Direction::SE, Direction::S,
                                    Direction::SW};
  for (std::uint64_t r = 0; r < dims.height; ++r) {
    for (std::uint64_t c = 0; c < dims.width; ++c) {
      const std::uint64_t idx = r * w + c;
      if (labels.sink_of[idx] == kNone) continue;
      const float here = elev.at(r, c);
      const std::uint32_t u = node_of.at(labels.sink_of[idx]);

      bool escapes = r == 0 || c == 0 || r == dims.height - 1 || c == dims.width - 1;
      for (Direction d : kFlowDirections) {
        const auto nb = out_neighbor(dims, CellRef{r, c}, d);
        if (nb && labels.sink_of[nb->row * w + nb->col] == kNone) escapes = true;
      }
      if (escapes) outside[u] = std::min(outside[u], here);

      for (Direction d : kForward) {
        const auto nb = out_neighbor(dims, CellRef{r, c}, d);
        if (!nb) continue;
        const std::uint64_t nidx = nb->row * w + nb->col;
        if (labels.sink_of[nidx] == kNone) continue;
        const std::uint32_t v = node_of.at(labels.sink_of[nidx]);
        note_edge(u, v, std::max(here, elev.at(*nb)));
      }
    }
  }

  for (const auto& [key, height] : best)
    graph.edges.push_back(
        {static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key & 0xffffffffu), height});
  for (std::uint32_t u = 0; u < outside.size(); ++u)
    if (outside[u] < kInf) graph.edges.push_back({u, WatershedGraph::kOutside, outside[u]});
  return graph;
}

std::vector<float> flood_heights(const WatershedGraph& graph) {
  const std::uint32_t n = static_cast<std::uint32_t>(graph.sinks.size());
  std::vector<std::vector<std::pair<std::uint32_t, float>>> adj(n);
  using Item = std::pair<float, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;

  for (const auto& e : graph.edges) {
    if (e.v == WatershedGraph::kOutside) {
      queue.emplace(e.height, e.u);
    } else {
      adj[e.u].emplace_back(e.v, e.height);
      adj[e.v].emplace_back(e.u, e.height);
    }
  }

  std::vector<float> height(n, kInf);
  while (!queue.empty()) {
    const auto [h, u] = queue.top();
    queue.pop();
    if (height[u] <= h) continue;
    height[u] = h;
    for (const auto& [v, eh] : adj[u])
      if (height[v] == kInf) queue.emplace(std::max(h, eh), v);
  }
  for (std::uint32_t u = 0; u < n; ++u)
    if (height[u] == kInf)
      throw_error(errc::unreachable, "watershed " + std::to_string(u) +
                                         " has no path to the outside");
  return height;
}

ElevationGrid apply_flooding(const ElevationGrid& elev, const WatershedLabels& labels,
                             const std::vector<float>& heights) {
  ElevationGrid flooded = elev;
  std::unordered_map<std::uint64_t, std::uint32_t> node_of;
  for (std::uint32_t i = 0; i < labels.sinks.size(); ++i) node_of[labels.sinks[i]] = i;
  const std::uint64_t n = elev.dims.cell_count();
  for (std::uint64_t i = 0; i < n; ++i) {
    if (labels.sink_of[i] == kNone) continue;
    flooded.cells[i] = std::max(flooded.cells[i], heights[node_of.at(labels.sink_of[i])]);
  }
  return flooded;
}

ElevationGrid flood_watershed(const ElevationGrid& elev) {
  const FlowDirGrid fd = steepest_descent_directions(elev);
  const WatershedLabels labels = watershed_decompose(fd);
  const WatershedGraph graph = build_watershed_graph(labels, elev);
  const std::vector<float> heights = flood_heights(graph);
  return apply_flooding(elev, labels, heights);
}

ElevationGrid brute_force_flood(const ElevationGrid& elev) {
  const GridDims dims = elev.dims;
  const std::uint64_t n = dims.cell_count();
  const std::uint64_t w = dims.width;

  ElevationGrid flooded = elev;
  std::vector<std::uint8_t> done(n, 0);
  using Item = std::pair<float, std::uint64_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;

  auto is_escape = [&](std::uint64_t r, std::uint64_t c) {
    if (r == 0 || c == 0 || r == dims.height - 1 || c == dims.width - 1) return true;
    for (Direction d : kFlowDirections) {
      const auto nb = out_neighbor(dims, CellRef{r, c}, d);
      if (nb && is_nodata(elev.at(*nb))) return true;
    }
    return false;
  };

  for (std::uint64_t r = 0; r < dims.height; ++r)
    for (std::uint64_t c = 0; c < dims.width; ++c) {
      if (is_nodata(elev.at(r, c))) {
        done[r * w + c] = 1;
        continue;
      }
      if (is_escape(r, c)) queue.emplace(elev.at(r, c), r * w + c);
    }

  while (!queue.empty()) {
    const auto [h, idx] = queue.top();
    queue.pop();
    if (done[idx]) continue;
    done[idx] = 1;
    flooded.cells[idx] = h;
    const CellRef cell{idx / w, idx % w};
    for (Direction d : kFlowDirections) {
      const auto nb = out_neighbor(dims, cell, d);
      if (!nb) continue;
      const std::uint64_t nidx = nb->row * w + nb->col;
      if (done[nidx]) continue;
      queue.emplace(std::max(h, elev.cells[nidx]), nidx);
    }
  }
  return flooded;
}

// ---------------------------------------------------------------------------
// Substitute graphs

namespace {

// Contracts a local elevation patch onto its terminal cells: computes the
// lowest-path forest from the terminals, then contracts the forest edges
// one by one (deepest first), keeping the lowest parallel edge. Returns
// adjacency among terminal cell indices.
std::unordered_map<std::uint64_t, std::unordered_map<std::uint64_t, float>>
contract_to_terminals(const ElevationGrid& patch, const std::vector<std::uint8_t>& terminal) {
  const GridDims dims = patch.dims;
  const std::uint64_t n = dims.cell_count();
  const std::uint64_t w = dims.width;

  std::unordered_map<std::uint64_t, std::unordered_map<std::uint64_t, float>> adj;
  auto connect = [&](std::uint64_t a, std::uint64_t b, float h) {
    if (a == b) return;
    auto [it, inserted] = adj[a].emplace(b, h);
    if (!inserted && h < it->second) it->second = h;
    auto [jt, jnserted] = adj[b].emplace(a, h);
    if (!jnserted && h < jt->second) jt->second = h;
  };

  constexpr Direction kForward[] = {Direction::E, Direction::SE, Direction::S,
                                    Direction::SW};
  for (std::uint64_t r = 0; r < dims.height; ++r)
    for (std::uint64_t c = 0; c < dims.width; ++c) {
      if (is_nodata(patch.at(r, c))) continue;
      for (Direction d : kForward) {
        const auto nb = out_neighbor(dims, CellRef{r, c}, d);
        if (!nb || is_nodata(patch.at(*nb))) continue;
        connect(r * w + c, nb->row * w + nb->col,
                std::max(patch.at(r, c), patch.at(*nb)));
      }
    }

  // lowest-path forest from the terminals
  std::vector<float> dist(n, kInf);
  std::vector<std::uint64_t> parent(n, kNone);
  std::vector<std::uint8_t> done(n, 0);
  using Item = std::pair<float, std::uint64_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  for (std::uint64_t i = 0; i < n; ++i)
    if (terminal[i] && !is_nodata(patch.cells[i])) {
      dist[i] = patch.cells[i];
      queue.emplace(dist[i], i);
    }
  std::vector<std::uint64_t> pop_order;
  while (!queue.empty()) {
    const auto [h, u] = queue.top();
    queue.pop();
    if (done[u]) continue;
    done[u] = 1;
    pop_order.push_back(u);
    const auto it = adj.find(u);
    if (it == adj.end()) continue;
    for (const auto& [v, eh] : it->second) {
      const float cand = std::max(h, eh);
      if (!done[v] && cand < dist[v]) {
        dist[v] = cand;
        parent[v] = u;
        queue.emplace(cand, v);
      }
    }
  }

  // contract interior cells onto their parents, deepest first
  for (auto it = pop_order.rbegin(); it != pop_order.rend(); ++it) {
    const std::uint64_t u = *it;
    if (terminal[u]) continue;
    const std::uint64_t p = parent[u];
    if (p == kNone) {
      adj.erase(u);
      continue;
    }
    const float up_height = adj[u].at(p);
    for (const auto& [nb, h] : adj[u]) {
      if (nb == p) continue;
      connect(nb, p, std::max(h, up_height));
      adj[nb].erase(u);
    }
    adj[p].erase(u);
    adj.erase(u);
  }
  // interior cells never reached from a terminal cannot influence
  // terminal-pair paths; drop them
  for (std::uint64_t i = 0; i < n; ++i) {
    if (terminal[i] || !adj.contains(i)) continue;
    for (const auto& [nb, h] : adj[i]) adj[nb].erase(i);
    adj.erase(i);
  }
  return adj;
}

}  // namespace

SubstituteGraph substitute_graph(const ElevationGrid& subgrid) {
  const GridDims dims = subgrid.dims;
  const std::uint64_t n = dims.cell_count();
  const std::uint64_t w = dims.width;

  std::vector<std::uint8_t> terminal(n, 0);
  for (std::uint64_t r = 0; r < dims.height; ++r)
    for (std::uint64_t c = 0; c < dims.width; ++c)
      if (r == 0 || c == 0 || r == dims.height - 1 || c == dims.width - 1)
        terminal[r * w + c] = 1;

  auto adj = contract_to_terminals(subgrid, terminal);

  SubstituteGraph graph;
  std::unordered_map<std::uint64_t, std::uint32_t> vertex_of;
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!terminal[i] || is_nodata(subgrid.cells[i])) continue;
    vertex_of[i] = static_cast<std::uint32_t>(graph.vertices.size());
    graph.vertices.push_back(CellRef{i / w, i % w});
  }
  for (const auto& [a, nbs] : adj) {
    for (const auto& [b, h] : nbs) {
      if (a >= b) continue;
      graph.edges.push_back({vertex_of.at(a), vertex_of.at(b), h});
    }
  }
  return graph;
}

// ---------------------------------------------------------------------------
// Separator flooding

FloodResult separator_flooding(BlockDevice& dev, GridDims dims, Layout layout,
                               const SeparatorOptions& options) {
  check_dims(dims);
  const std::uint64_t n = dims.cell_count();
  const std::uint64_t w = dims.width;
  const std::uint64_t M = options.memory_bytes.value_or(dev.config().memory_bytes);
  const std::uint64_t B = options.block_bytes.value_or(dev.config().block_bytes);
  const std::uint64_t z = options.subgrid_side.value_or(choose_subgrid_size(M, B));
  if (z < 3) throw_error(errc::too_small_memory, "subgrid side must be at least 3");

  SegmentTables tables_storage;
  const SegmentTables* tables = nullptr;
  if (layout == Layout::ZOrder) {
    tables_storage = SegmentTables::build(dims);
    tables = &tables_storage;
  }
  auto slot_of = [&](std::uint64_t r, std::uint64_t c) {
    return layout == Layout::RowMajor ? r * w + c : tables->offset_of(CellRef{r, c});
  };

  const std::uint64_t out_region = dev.extend(n * 4);

  auto for_each_subgrid = [&](auto&& body) {
    std::uint64_t r0 = 0;
    while (true) {
      const std::uint64_t r1 = std::min(r0 + z - 1, dims.height - 1);
      std::uint64_t c0 = 0;
      while (true) {
        const std::uint64_t c1 = std::min(c0 + z - 1, dims.width - 1);
        body(r0, r1, c0, c1);
        if (c1 == dims.width - 1) break;
        c0 = c1;
      }
      if (r1 == dims.height - 1) break;
      r0 = r1;
    }
  };

  auto load_patch = [&](std::uint64_t r0, std::uint64_t r1, std::uint64_t c0,
                        std::uint64_t c1) {
    ElevationGrid patch(GridDims{r1 - r0 + 1, c1 - c0 + 1}, Layout::RowMajor);
    if (layout == Layout::RowMajor) {
      std::vector<std::byte> row(patch.dims.width * 4);
      for (std::uint64_t lr = 0; lr < patch.dims.height; ++lr) {
        dev.read_bytes(((r0 + lr) * w + c0) * 4, row);
        std::memcpy(patch.cells.data() + lr * patch.dims.width, row.data(), row.size());
      }
    } else {
      for (std::uint64_t lr = 0; lr < patch.dims.height; ++lr)
        for (std::uint64_t lc = 0; lc < patch.dims.width; ++lc)
          patch.at(lr, lc) = dev.read_f32(slot_of(r0 + lr, c0 + lc) * 4);
    }
    return patch;
  };

  // terminals: subgrid ring cells plus data cells beside a NoData void
  auto terminal_mask = [&](const ElevationGrid& patch) {
    const std::uint64_t ph = patch.dims.height, pw = patch.dims.width;
    std::vector<std::uint8_t> terminal(ph * pw, 0);
    for (std::uint64_t lr = 0; lr < ph; ++lr)
      for (std::uint64_t lc = 0; lc < pw; ++lc) {
        if (is_nodata(patch.at(lr, lc))) continue;
        if (lr == 0 || lc == 0 || lr == ph - 1 || lc == pw - 1) {
          terminal[lr * pw + lc] = 1;
          continue;
        }
        for (Direction d : kFlowDirections) {
          const auto nb = out_neighbor(patch.dims, CellRef{lr, lc}, d);
          if (nb && is_nodata(patch.at(*nb))) {
            terminal[lr * pw + lc] = 1;
            break;
          }
        }
      }
    return terminal;
  };

  // --- phase one: contract every subgrid onto its terminals -------------
  std::unordered_map<std::uint64_t, std::vector<std::pair<std::uint64_t, float>>> combined;
  std::unordered_map<std::uint64_t, float> outside;  // terminal -> escape height
  auto note_outside = [&](std::uint64_t cell, float h) {
    auto [it, inserted] = outside.emplace(cell, h);
    if (!inserted && h < it->second) it->second = h;
  };

  for_each_subgrid([&](std::uint64_t r0, std::uint64_t r1, std::uint64_t c0,
                       std::uint64_t c1) {
    const ElevationGrid patch = load_patch(r0, r1, c0, c1);
    const std::vector<std::uint8_t> terminal = terminal_mask(patch);
    const auto adj = contract_to_terminals(patch, terminal);
    const std::uint64_t pw = patch.dims.width;

    auto global_of = [&](std::uint64_t local) {
      return (r0 + local / pw) * w + (c0 + local % pw);
    };
    for (const auto& [a, nbs] : adj)
      for (const auto& [b, h] : nbs)
        if (a < b) {
          combined[global_of(a)].emplace_back(global_of(b), h);
          combined[global_of(b)].emplace_back(global_of(a), h);
        }

    for (std::uint64_t local = 0; local < terminal.size(); ++local) {
      if (!terminal[local] || is_nodata(patch.cells[local])) continue;
      const std::uint64_t g = global_of(local);
      const std::uint64_t gr = g / w, gc = g % w;
      bool escapes = gr == 0 || gc == 0 || gr == dims.height - 1 || gc == dims.width - 1;
      if (!escapes) {
        // beside a NoData void (ring cells may owe their terminal status
        // to the subgrid edge alone)
        for (std::uint64_t lr = local / pw ? local / pw - 1 : 0;
             !escapes && lr <= std::min(patch.dims.height - 1, local / pw + 1); ++lr)
          for (std::uint64_t lc = local % pw ? local % pw - 1 : 0;
               !escapes && lc <= std::min(pw - 1, local % pw + 1); ++lc)
            if (is_nodata(patch.at(lr, lc))) escapes = true;
      }
      if (escapes) note_outside(g, patch.cells[local]);
      combined.try_emplace(g);  // isolated terminals still need a height
    }
  });

  // --- phase two: lowest-path heights for all separator cells -----------
  std::unordered_map<std::uint64_t, float> height;
  {
    using Item = std::pair<float, std::uint64_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    for (const auto& [cell, h] : outside) queue.emplace(h, cell);
    while (!queue.empty()) {
      const auto [h, cell] = queue.top();
      queue.pop();
      if (height.contains(cell)) continue;
      height[cell] = h;
      const auto it = combined.find(cell);
      if (it == combined.end()) continue;
      for (const auto& [nb, eh] : it->second)
        if (!height.contains(nb)) queue.emplace(std::max(h, eh), nb);
    }
    for (const auto& [cell, nbs] : combined)
      if (!height.contains(cell))
        throw_error(errc::unreachable,
                    "separator cell " + std::to_string(cell) + " has no path out");
  }

  // --- phase three: per-subgrid sweep from the separator heights --------
  for_each_subgrid([&](std::uint64_t r0, std::uint64_t r1, std::uint64_t c0,
                       std::uint64_t c1) {
    const ElevationGrid patch = load_patch(r0, r1, c0, c1);
    const std::vector<std::uint8_t> terminal = terminal_mask(patch);
    const std::uint64_t ph = patch.dims.height, pw = patch.dims.width;

    std::vector<float> flooded(ph * pw, kInf);
    std::vector<std::uint8_t> done(ph * pw, 0);
    using Item = std::pair<float, std::uint64_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    for (std::uint64_t local = 0; local < terminal.size(); ++local) {
      if (is_nodata(patch.cells[local])) {
        done[local] = 1;
        flooded[local] = elevation_nodata();
        continue;
      }
      if (!terminal[local]) continue;
      queue.emplace(height.at((r0 + local / pw) * w + (c0 + local % pw)), local);
    }
    while (!queue.empty()) {
      const auto [h, local] = queue.top();
      queue.pop();
      if (done[local]) continue;
      done[local] = 1;
      flooded[local] = h;
      const CellRef cell{local / pw, local % pw};
      for (Direction d : kFlowDirections) {
        const auto nb = out_neighbor(patch.dims, cell, d);
        if (!nb) continue;
        const std::uint64_t nlocal = nb->row * pw + nb->col;
        if (done[nlocal]) continue;
        queue.emplace(std::max(h, patch.cells[nlocal]), nlocal);
      }
    }

    if (layout == Layout::RowMajor) {
      std::vector<std::byte> row(pw * 4);
      for (std::uint64_t lr = 0; lr < ph; ++lr) {
        std::memcpy(row.data(), flooded.data() + lr * pw, row.size());
        dev.write_bytes(out_region + ((r0 + lr) * w + c0) * 4, row);
      }
    } else {
      for (std::uint64_t local = 0; local < flooded.size(); ++local)
        dev.write_f32(out_region + slot_of(r0 + local / pw, c0 + local % pw) * 4,
                      flooded[local]);
    }
  });

  FloodResult result;
  result.stats = dev.flush();
  std::vector<std::byte> payload(n * 4);
  dev.raw_read(out_region, payload);
  result.flooded = elevation_from_payload(dims, layout, payload);
  return result;
}

}  // namespace emgrid
