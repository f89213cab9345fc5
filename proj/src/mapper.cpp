#include "dice/mapper.hpp"

#include "dice/bits.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>

namespace dice {

namespace {

constexpr int kDr[kNumDirs] = {-1, 0, 1, 0};
constexpr int kDc[kNumDirs] = {0, 1, 0, -1};

Dir opposite(Dir d) { return static_cast<Dir>((static_cast<int>(d) + 2) % kNumDirs); }
int op_latency(const CgraGrid& g, Opcode op) { return is_sfu_op(op) ? g.sfu_latency : 1; }
SwitchSel from_side(Dir side) { return static_cast<SwitchSel>(static_cast<int>(SwitchSel::FromN) + static_cast<int>(side)); }
uint8_t link_index(Dir side, int track) { return static_cast<uint8_t>(static_cast<int>(side) * kMaxTracks + track); }

}  // namespace

int CgraGrid::neighbor(int cell, Dir d) const {
  int r = cell / cols + kDr[static_cast<int>(d)], c = cell % cols + kDc[static_cast<int>(d)];
  if (r < 0 || r >= rows || c < 0 || c >= cols) return -1;
  return r * cols + c;
}

int CgraGrid::distance(int a, int b) const { return std::abs(a / cols - b / cols) + std::abs(a % cols - b % cols); }

ResourceBudget CgraGrid::budget(int ldst_ports) const {
  ResourceBudget b;
  b.pes = pe_count();
  b.sfus = sfu_count();
  b.ldst_ports = ldst_ports;
  b.switch_tracks = tracks;
  return b;
}

void CgraGrid::validate() const {
  if (rows < 1 || cols < 2) throw ConfigError("CGRA grid needs at least 1 row and 2 columns");
  if (tracks < 1 || tracks > kMaxTracks) throw ConfigError("switch tracks must be 1 or 2");
  if (sfu_latency < 1 || sfu_latency > 32) throw ConfigError("SFU latency must be in [1, 32]");
}

// ---------------------------------------------------------------------------
// Placement and routing

namespace {

struct RouteResult {
  Dir side;     // side of the consumer the value enters from
  int track;
  int arrival;  // cycle thread 0's value is present at the consumer input
};

// Links from the first one (a seed) to the one entering the consumer.
struct Path {
  std::vector<int> links;
  std::vector<int> tau;
};

class Fabric {
 public:
  explicit Fabric(const CgraGrid& g)
      : grid_(&g), cells(g.cells()), link_src(g.cells() * kNumDirs * kMaxTracks, -1),
        link_tau(link_src.size(), 0), owner(g.cells(), -1) {}

  int idx(int cell, Dir d, int t) const { return (cell * kNumDirs + static_cast<int>(d)) * kMaxTracks + t; }
  int cell_of_link(int l) const { return l / (kNumDirs * kMaxTracks); }
  Dir dir_of_link(int l) const { return static_cast<Dir>((l / kMaxTracks) % kNumDirs); }
  int track_of_link(int l) const { return l % kMaxTracks; }
  int head(int l) const { return grid_->neighbor(cell_of_link(l), dir_of_link(l)); }

  // Links that can start a route for `src`: its existing tree, or a free out-link of the producer.
  std::vector<std::pair<int, int>> seeds(int src, int producer, int ready) const {
    std::vector<std::pair<int, int>> s;
    for (int l = 0; l < static_cast<int>(link_src.size()); ++l)
      if (link_src[l] == src) s.push_back({l, link_tau[l]});
    for (int d = 0; d < kNumDirs; ++d)
      for (int t = 0; t < grid_->tracks; ++t) {
        int l = idx(producer, static_cast<Dir>(d), t);
        if (link_src[l] < 0 && grid_->neighbor(producer, static_cast<Dir>(d)) >= 0) s.push_back({l, ready});
      }
    return s;
  }

  // Earliest-arrival route for `src` produced at `producer`, ready at `ready`, into `consumer`.
  std::optional<Path> shortest(int src, int producer, int ready, int consumer) const {
    struct State {
      int tau, hops, link;
      bool operator>(const State& o) const { return std::tie(tau, hops, link) > std::tie(o.tau, o.hops, o.link); }
    };
    const int n = static_cast<int>(link_src.size());
    std::vector<int> best(n, INT32_MAX), prev(n, -2);
    std::priority_queue<State, std::vector<State>, std::greater<>> pq;
    for (auto [l, tau] : seeds(src, producer, ready))
      if (tau < best[l]) {
        best[l] = tau;
        prev[l] = -1;
        pq.push({tau, 0, l});
      }
    const int limit = ready + 2 * (grid_->rows + grid_->cols) + 4;
    while (!pq.empty()) {
      State s = pq.top();
      pq.pop();
      if (s.tau != best[s.link]) continue;
      const int next = head(s.link);
      if (next == consumer) {
        Path p;
        for (int l = s.link; l >= 0; l = prev[l]) {
          p.links.push_back(l);
          p.tau.push_back(best[l]);
        }
        std::reverse(p.links.begin(), p.links.end());
        std::reverse(p.tau.begin(), p.tau.end());
        return p;
      }
      if (s.tau + 1 > limit) continue;
      for (int d2 = 0; d2 < kNumDirs; ++d2) {
        if (grid_->neighbor(next, static_cast<Dir>(d2)) < 0) continue;
        int l2 = idx(next, static_cast<Dir>(d2), track_of_link(s.link));
        if (link_src[l2] >= 0) continue;  // busy, or already seeded as part of this source's tree
        if (s.tau + 1 < best[l2]) {
          best[l2] = s.tau + 1;
          prev[l2] = s.link;
          pq.push({s.tau + 1, s.hops + 1, l2});
        }
      }
    }
    return std::nullopt;
  }

  // Route whose arrival falls in [lo, hi], detouring over free links when the
  // direct path would be too early for the consumer's delay line.
  std::optional<Path> windowed(int src, int producer, int ready, int consumer, int lo, int hi) const {
    Path path;
    std::vector<bool> on_path(link_src.size(), false);
    int budget = 20000;
    std::function<bool(int, int)> dfs = [&](int l, int tau) -> bool {
      if (--budget < 0) return false;
      path.links.push_back(l);
      path.tau.push_back(tau);
      on_path[l] = true;
      const int next = head(l);
      if (next == consumer && tau >= lo) return true;
      for (int d2 = 0; d2 < kNumDirs; ++d2) {
        const int n2 = grid_->neighbor(next, static_cast<Dir>(d2));
        if (n2 < 0) continue;
        const int l2 = idx(next, static_cast<Dir>(d2), track_of_link(l));
        if (link_src[l2] >= 0 || on_path[l2]) continue;
        const int min_arrival = tau + 1 + (n2 == consumer ? 0 : grid_->distance(n2, consumer));
        if (min_arrival > hi) continue;
        if (dfs(l2, tau + 1)) return true;
      }
      on_path[l] = false;
      path.links.pop_back();
      path.tau.pop_back();
      return false;
    };
    auto s = seeds(src, producer, ready);
    std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (auto [l, tau] : s) {
      if (tau > hi) continue;
      if (dfs(l, tau)) return path;
      if (budget < 0) break;
    }
    return std::nullopt;
  }

  RouteResult commit(int src, const Path& p) {
    for (size_t k = 0; k < p.links.size(); ++k) {
      const int l = p.links[k];
      if (link_src[l] == src) continue;  // shared prefix of the existing tree
      const int cell = cell_of_link(l);
      const int d = static_cast<int>(dir_of_link(l));
      const int t = track_of_link(l);
      link_src[l] = src;
      link_tau[l] = p.tau[k];
      cells[cell].sw[d][t] = k == 0 ? SwitchSel::Alu : from_side(opposite(dir_of_link(p.links[k - 1])));
    }
    const int last = p.links.back();
    return RouteResult{opposite(dir_of_link(last)), track_of_link(last), p.tau.back()};
  }

  const CgraGrid* grid_;
  std::vector<CellConfig> cells;
  std::vector<int> link_src;
  std::vector<int> link_tau;
  std::vector<int> owner;  // global node id per cell
};

std::vector<bool> output_bus_nodes(const PGraph& pg) {
  std::vector<bool> out(pg.nodes.size(), false);
  for (const auto& o : pg.outputs) out[o.node] = true;
  auto mark = [&](const NodeSrc& s) {
    if (s.kind == SrcKind::Node) out[s.index] = true;
  };
  for (const auto& s : pg.sinks) {
    mark(s.addr);
    mark(s.value);
    if (s.guard.kind == GuardKind::Node) out[s.guard.index] = true;
  }
  return out;
}

InputSel direct_input(const NodeSrc& s) {
  switch (s.kind) {
    case SrcKind::Reg: return {InKind::Rf, static_cast<uint8_t>(s.index), 0};
    case SrcKind::Const: return {InKind::Const, static_cast<uint8_t>(s.index), 0};
    case SrcKind::Special: return {InKind::Special, static_cast<uint8_t>(s.index), 0};
    default: return {};
  }
}

// One placement attempt. Returns nullopt on failure.
std::optional<Mapping> try_map(const PGraph& pg, const CgraGrid& g, int unroll, std::mt19937& rng, bool shuffle) {
  const int nn = static_cast<int>(pg.nodes.size());
  Fabric fab(g);
  Mapping m;
  m.unroll = unroll;
  m.cell_of.assign(unroll, std::vector<int>(nn, -1));
  const auto out_bus = output_bus_nodes(pg);

  for (int copy = 0; copy < unroll; ++copy) {
    for (int i = 0; i < nn; ++i) {
      const PNode& node = pg.nodes[i];
      const bool sfu = node.is_sfu();
      std::vector<int> cand;
      for (int c = 0; c < g.cells(); ++c)
        if (fab.owner[c] < 0 && g.is_sfu_cell(c) == sfu) cand.push_back(c);
      if (shuffle) std::shuffle(cand.begin(), cand.end(), rng);

      // Distinct internal producers feeding this node.
      std::vector<int> producers;
      auto want = [&](int p) {
        if (std::find(producers.begin(), producers.end(), p) == producers.end()) producers.push_back(p);
      };
      for (const auto& s : node.srcs)
        if (s.kind == SrcKind::Node) want(s.index);
      if (node.old_value.kind == SrcKind::Node) want(node.old_value.index);
      if (node.guard.kind == GuardKind::Node) want(node.guard.index);

      struct Choice {
        int fire, dist, cell;  // dist counts occupied links after routing
        Fabric fab;
        std::map<int, RouteResult> routes;
      };
      std::vector<Choice> choices;
      for (int c : cand) {
        // Probe shortest routes to find the fire time, then route for real:
        // late inputs first, early ones detoured into the delay window.
        std::vector<std::pair<int, int>> order;  // (shortest arrival, producer)
        int fire = 0;
        bool ok = true;
        {
          Fabric probe = fab;
          for (int p : producers) {
            const int pc = m.cell_of[copy][p];
            const int ready = probe.cells[pc].fire + op_latency(g, probe.cells[pc].op);
            auto path = probe.shortest(copy * nn + p, pc, ready, c);
            if (!path) {
              ok = false;
              break;
            }
            RouteResult r = probe.commit(copy * nn + p, *path);
            order.push_back({r.arrival, p});
            fire = std::max(fire, r.arrival);
          }
        }
        if (!ok) continue;
        std::sort(order.rbegin(), order.rend());
        Fabric trial = fab;
        std::map<int, RouteResult> routes;
        for (auto [arrival, p] : order) {
          const int pc = m.cell_of[copy][p];
          const int ready = trial.cells[pc].fire + op_latency(g, trial.cells[pc].op);
          auto path = trial.shortest(copy * nn + p, pc, ready, c);
          if (path && fire - path->tau.back() > kMaxInputDelay)
            path = trial.windowed(copy * nn + p, pc, ready, c, fire - kMaxInputDelay, fire);
          if (!path || path->tau.back() > fire) {
            ok = false;
            break;
          }
          routes[p] = trial.commit(copy * nn + p, *path);
        }
        if (!ok || fire > 255 - op_latency(g, node.op)) continue;
        int links = 0;
        for (size_t l = 0; l < trial.link_src.size(); ++l) links += trial.link_src[l] >= 0;
        choices.push_back(Choice{fire, links, c, std::move(trial), std::move(routes)});
      }
      if (choices.empty()) return std::nullopt;
      std::stable_sort(choices.begin(), choices.end(),
                       [](const Choice& a, const Choice& b) { return std::tie(a.fire, a.dist) < std::tie(b.fire, b.dist); });
      // Retries sometimes take a near-best candidate to escape congested layouts.
      size_t pick = 0;
      if (shuffle && choices.size() > 1 && rng() % 4 == 0) pick = rng() % std::min<size_t>(3, choices.size());
      std::optional<Choice> best = std::move(choices[pick]);

      fab = std::move(best->fab);
      const int c = best->cell;
      fab.owner[c] = copy * nn + i;
      m.cell_of[copy][i] = c;
      CellConfig& cell = fab.cells[c];
      cell.active = true;
      cell.op = node.op;
      cell.lane = static_cast<uint8_t>(copy);
      cell.fire = static_cast<uint8_t>(best->fire);
      cell.out_bus = out_bus[i];
      auto link_in = [&](int p) {
        const RouteResult& r = best->routes.at(p);
        return InputSel{InKind::Link, link_index(r.side, r.track), static_cast<uint8_t>(best->fire - r.arrival)};
      };
      for (size_t k = 0; k < node.srcs.size(); ++k)
        cell.in[k] = node.srcs[k].kind == SrcKind::Node ? link_in(node.srcs[k].index) : direct_input(node.srcs[k]);
      if (node.old_value.present())
        cell.in[3] = node.old_value.kind == SrcKind::Node ? link_in(node.old_value.index) : direct_input(node.old_value);
      if (node.guard.kind == GuardKind::RegPred) {
        cell.pred = {PredKind::Rf, static_cast<uint8_t>(node.guard.index), node.guard.negate, 0};
      } else if (node.guard.kind == GuardKind::Node) {
        InputSel l = link_in(node.guard.index);
        cell.pred = {PredKind::Link, l.index, node.guard.negate, l.delay};
      }
    }
  }
  m.config.grid = g;
  m.config.cells = std::move(fab.cells);
  m.lat = compute_latency(m.config);
  return m;
}

}  // namespace

Mapping place_and_route(const PGraph& pg, const CgraGrid& grid, int unroll, const MapOptions& opts) {
  grid.validate();
  if (unroll != 1 && unroll != 2 && unroll != 4) throw MapError("unroll factor must be 1, 2 or 4");
  if (pg.compute_nodes() * unroll > grid.pe_count() || pg.sfu_nodes() * unroll > grid.sfu_count())
    throw MapError("pg" + std::to_string(pg.id) + ": " + std::to_string(unroll) + " copies exceed fabric capacity");
  for (const auto& n : pg.nodes)
    if (n.srcs.size() > 3) throw MapError("node with more than 3 operands");
  std::mt19937 rng(opts.seed);
  for (int a = 0; a < std::max(1, opts.attempts); ++a) {
    if (auto m = try_map(pg, grid, unroll, rng, a > 0)) return *m;
  }
  throw MapError("pg" + std::to_string(pg.id) + ": placement and routing failed after " +
                 std::to_string(opts.attempts) + " attempts");
}

int compute_latency(const CgraConfig& cfg) {
  int lat = 1;
  for (const auto& c : cfg.cells)
    if (c.active && c.out_bus) lat = std::max(lat, c.fire + op_latency(cfg.grid, c.op));
  return lat;
}

// ---------------------------------------------------------------------------
// Bitstream

int bitstream_bytes(const CgraGrid& grid) { return (grid.cells() * kCellRecordBits + 7) / 8; }

std::vector<uint8_t> encode_bitstream(const CgraConfig& cfg) {
  const int bytes = bitstream_bytes(cfg.grid);
  if (bytes > 255) throw EncodeError("bitstream of " + std::to_string(bytes) + " bytes exceeds the 8-bit length field");
  if (static_cast<int>(cfg.cells.size()) != cfg.grid.cells()) throw EncodeError("cell count does not match grid");
  BitWriter w(bytes);
  for (const auto& c : cfg.cells) {
    w.put(c.active ? static_cast<uint32_t>(c.op) + 1 : 0, 6);
    w.put(c.lane, 2);
    for (const auto& in : c.in) {
      w.put(static_cast<uint32_t>(in.kind), 3);
      w.put(in.index, 6);
      w.put(in.delay, 3);
    }
    w.put(static_cast<uint32_t>(c.pred.kind), 2);
    w.put(c.pred.index, 3);
    w.put(c.pred.negate, 1);
    w.put(c.pred.delay, 3);
    w.put(c.fire, 8);
    w.put(c.out_bus, 1);
    for (const auto& dir : c.sw)
      for (SwitchSel s : dir) w.put(static_cast<uint32_t>(s), 3);
  }
  return w.take();
}

CgraConfig decode_bitstream(std::span<const uint8_t> bytes, const CgraGrid& grid) {
  const size_t expect = static_cast<size_t>(bitstream_bytes(grid));
  if (bytes.size() < expect) throw EncodeError("truncated bitstream");
  if (bytes.size() > expect) throw EncodeError("oversized bitstream");
  BitReader r(bytes);
  CgraConfig cfg;
  cfg.grid = grid;
  cfg.cells.resize(grid.cells());
  for (auto& c : cfg.cells) {
    uint32_t op = r.get(6);
    if (op > static_cast<uint32_t>(Opcode::Count)) throw EncodeError("invalid opcode field");
    c.active = op != 0;
    if (c.active) {
      c.op = static_cast<Opcode>(op - 1);
      if (c.op == Opcode::Ld || c.op == Opcode::St || c.op == Opcode::Bra || c.op == Opcode::Bar ||
          c.op == Opcode::Ret)
        throw EncodeError("opcode not executable on the fabric");
    }
    c.lane = static_cast<uint8_t>(r.get(2));
    for (auto& in : c.in) {
      uint32_t k = r.get(3);
      if (k > static_cast<uint32_t>(InKind::Link)) throw EncodeError("invalid input kind");
      in.kind = static_cast<InKind>(k);
      in.index = static_cast<uint8_t>(r.get(6));
      in.delay = static_cast<uint8_t>(r.get(3));
    }
    uint32_t pk = r.get(2);
    if (pk > static_cast<uint32_t>(PredKind::Link)) throw EncodeError("invalid predicate kind");
    c.pred.kind = static_cast<PredKind>(pk);
    c.pred.index = static_cast<uint8_t>(r.get(3));
    c.pred.negate = r.get(1) != 0;
    c.pred.delay = static_cast<uint8_t>(r.get(3));
    c.fire = static_cast<uint8_t>(r.get(8));
    c.out_bus = r.get(1) != 0;
    for (auto& dir : c.sw)
      for (SwitchSel& s : dir) {
        uint32_t v = r.get(3);
        if (v > static_cast<uint32_t>(SwitchSel::FromW)) throw EncodeError("invalid switch select");
        s = static_cast<SwitchSel>(v);
      }
    if (!c.active) {
      CellConfig idle;
      idle.sw = c.sw;
      if (!(c == idle)) throw EncodeError("idle cell carries operation fields");
    }
  }
  for (size_t bit = r.pos(); bit < expect * 8; ++bit)
    if ((bytes[bit / 8] >> (bit % 8)) & 1u) throw EncodeError("nonzero padding bits");
  return cfg;
}

// ---------------------------------------------------------------------------
// Verification

namespace {

struct Trace {
  int producer = -1;
  int tau = 0;
  std::string error;
};

// Follows switch settings backwards from a consumer input to the producing ALU.
Trace trace_link(const CgraConfig& cfg, int cell, uint8_t index) {
  const CgraGrid& g = cfg.grid;
  Dir side = static_cast<Dir>(index / kMaxTracks);
  const int track = index % kMaxTracks;
  if (index / kMaxTracks >= kNumDirs || track >= g.tracks) return {-1, 0, "bad link index"};
  int hops = 0;
  while (true) {
    const int x = g.neighbor(cell, side);
    if (x < 0) return {-1, 0, "link enters from outside the grid"};
    const SwitchSel sel = cfg.cells[x].sw[static_cast<int>(opposite(side))][track];
    if (sel == SwitchSel::None) return {-1, 0, "link is not driven"};
    if (sel == SwitchSel::Alu) {
      if (!cfg.cells[x].active) return {-1, 0, "idle cell drives a link"};
      return {x, cfg.cells[x].fire + op_latency(g, cfg.cells[x].op) + hops, ""};
    }
    side = static_cast<Dir>(static_cast<int>(sel) - static_cast<int>(SwitchSel::FromN));
    cell = x;
    if (++hops > g.cells() * kNumDirs * kMaxTracks) return {-1, 0, "routing loop"};
  }
}

}  // namespace

std::vector<std::string> verify_schedule(const Mapping& m, const PGraph& pg) {
  std::vector<std::string> v;
  const CgraConfig& cfg = m.config;
  const CgraGrid& g = cfg.grid;
  auto fail = [&](const std::string& s) { v.push_back("pg" + std::to_string(pg.id) + ": " + s); };
  if (static_cast<int>(cfg.cells.size()) != g.cells()) {
    fail("cell count mismatch");
    return v;
  }
  if (static_cast<int>(m.cell_of.size()) != m.unroll) fail("copy count mismatch");
  const auto out_bus = output_bus_nodes(pg);
  std::vector<int> used(g.cells(), 0);
  for (int copy = 0; copy < static_cast<int>(m.cell_of.size()); ++copy) {
    for (size_t i = 0; i < pg.nodes.size(); ++i) {
      const PNode& n = pg.nodes[i];
      const std::string who = "copy " + std::to_string(copy) + " n" + std::to_string(i);
      const int c = m.cell_of[copy][i];
      if (c < 0 || c >= g.cells()) {
        fail(who + " unplaced");
        continue;
      }
      ++used[c];
      const CellConfig& cell = cfg.cells[c];
      if (!cell.active || cell.op != n.op) fail(who + " opcode mismatch");
      if (cell.lane != copy) fail(who + " lane mismatch");
      if (g.is_sfu_cell(c) != n.is_sfu()) fail(who + " placed on an incapable cell");
      if (cell.out_bus != out_bus[i]) fail(who + " output-bus flag mismatch");
      auto check = [&](const InputSel& in, const NodeSrc& s, const std::string& what) {
        if (s.kind == SrcKind::Node) {
          if (in.kind != InKind::Link) return fail(who + " " + what + " not routed");
          Trace t = trace_link(cfg, c, in.index);
          if (!t.error.empty()) return fail(who + " " + what + ": " + t.error);
          if (t.producer != m.cell_of[copy][s.index]) return fail(who + " " + what + " routed from wrong cell");
          if (t.tau + in.delay != cell.fire)
            fail(who + " " + what + " arrives at " + std::to_string(t.tau + in.delay) + ", fires at " +
                 std::to_string(cell.fire));
          if (in.delay > kMaxInputDelay) fail(who + " delay exceeds buffer");
        } else if (!(in == direct_input(s))) {
          fail(who + " " + what + " source mismatch");
        }
      };
      for (size_t k = 0; k < kCellInputs - 1; ++k)
        check(cell.in[k], k < n.srcs.size() ? n.srcs[k] : NodeSrc{}, "input " + std::to_string(k));
      check(cell.in[3], n.old_value, "old value");
      switch (n.guard.kind) {
        case GuardKind::None:
          if (cell.pred.kind != PredKind::None) fail(who + " unexpected predicate");
          break;
        case GuardKind::RegPred:
          if (cell.pred.kind != PredKind::Rf || cell.pred.index != n.guard.index || cell.pred.negate != n.guard.negate)
            fail(who + " predicate mismatch");
          break;
        case GuardKind::Node: {
          if (cell.pred.kind != PredKind::Link || cell.pred.negate != n.guard.negate) {
            fail(who + " predicate mismatch");
            break;
          }
          check(InputSel{InKind::Link, cell.pred.index, cell.pred.delay}, NodeSrc::node(n.guard.index), "predicate");
          break;
        }
      }
    }
  }
  int active = 0;
  for (int c = 0; c < g.cells(); ++c) {
    if (used[c] > 1) fail("cell " + std::to_string(c) + " holds " + std::to_string(used[c]) + " nodes");
    active += cfg.cells[c].active;
  }
  if (active != m.unroll * static_cast<int>(pg.nodes.size())) fail("stray active cells");
  if (compute_latency(cfg) != m.lat) fail("LAT mismatch");
  return v;
}

// ---------------------------------------------------------------------------
// Pipelined evaluation

namespace {

struct Sig {
  bool valid = false;
  int thread = -1;
  uint32_t value = 0;
  bool written = false;
};

class PipelineEval {
 public:
  PipelineEval(const Mapping& m, std::span<const uint32_t> cbuf, std::span<const ThreadInputs> threads,
               std::vector<std::string>& violations)
      : m_(m), g_(m.config.grid), cbuf_(cbuf), threads_(threads), v_(violations) {}

  Sig alu(int cell, int tau) {
    auto key = std::make_pair(cell, tau);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    Sig s = compute(cell, tau);
    memo_[key] = s;
    return s;
  }

 private:
  Sig link(int cell, uint8_t index, int tau) {
    Dir side = static_cast<Dir>(index / kMaxTracks);
    const int track = index % kMaxTracks;
    const int x = g_.neighbor(cell, side);
    if (x < 0) return {};
    const SwitchSel sel = m_.config.cells[x].sw[static_cast<int>(opposite(side))][track];
    if (sel == SwitchSel::Alu) return alu(x, tau);
    if (sel == SwitchSel::None) return {};
    Dir in = static_cast<Dir>(static_cast<int>(sel) - static_cast<int>(SwitchSel::FromN));
    return link(x, link_index(in, track), tau - 1);
  }

  Sig input(int cell, const InputSel& in, int tau, int thread) {
    const ThreadInputs& t = threads_[thread];
    switch (in.kind) {
      case InKind::None: return {true, thread, 0, false};
      case InKind::Rf: return {true, thread, t.regs[in.index], false};
      case InKind::Const: return {true, thread, in.index < cbuf_.size() ? cbuf_[in.index] : 0u, false};
      case InKind::Special: return {true, thread, t.specials[in.index], false};
      case InKind::Link: {
        Sig s = link(cell, in.index, tau - in.delay);
        if (!s.valid || s.thread != thread)
          v_.push_back("cell " + std::to_string(cell) + " cycle " + std::to_string(tau) + ": expected thread " +
                       std::to_string(thread) + ", saw " + (s.valid ? std::to_string(s.thread) : "nothing"));
        return s;
      }
    }
    return {};
  }

  Sig compute(int cell, int tau) {
    const CellConfig& c = m_.config.cells[cell];
    if (!c.active) return {};
    const int fire_cycle = tau - op_latency(g_, c.op);
    const int group = fire_cycle - c.fire;
    const int thread = group * m_.unroll + c.lane;
    if (group < 0 || thread >= static_cast<int>(threads_.size())) return {};
    bool enabled = true;
    if (c.pred.kind == PredKind::Rf) {
      enabled = ((threads_[thread].regs[pred_bit(c.pred.index)] & 1u) != 0) != c.pred.negate;
    } else if (c.pred.kind == PredKind::Link) {
      Sig p = input(cell, InputSel{InKind::Link, c.pred.index, c.pred.delay}, fire_cycle, thread);
      enabled = ((p.value & 1u) != 0) != c.pred.negate;
    }
    Sig out{true, thread, 0, false};
    if (enabled) {
      const int arity = c.op == Opcode::Ldc || c.op == Opcode::Psel ? 1 : opcode_arity(c.op);
      uint32_t v[3] = {0, 0, 0};
      for (int k = 0; k < arity; ++k) v[k] = input(cell, c.in[k], fire_cycle, thread).value;
      out.value = apply_node_op(c.op, std::span<const uint32_t>(v, arity));
      out.written = true;
    } else if (c.in[3].kind != InKind::None) {
      Sig old = input(cell, c.in[3], fire_cycle, thread);
      out.value = old.value;
      out.written = c.in[3].kind == InKind::Link && old.written;
    }
    return out;
  }

  const Mapping& m_;
  const CgraGrid& g_;
  std::span<const uint32_t> cbuf_;
  std::span<const ThreadInputs> threads_;
  std::vector<std::string>& v_;
  std::map<std::pair<int, int>, Sig> memo_;
};

}  // namespace

PipelineRun simulate_pipeline(const Mapping& m, const PGraph& pg, std::span<const uint32_t> cbuf,
                              std::span<const ThreadInputs> threads) {
  PipelineRun run;
  PipelineEval ev(m, cbuf, threads, run.violations);
  const int n = static_cast<int>(threads.size());
  run.results.resize(n);
  run.ready_cycle.resize(n);
  for (int t = 0; t < n; ++t) {
    const int group = t / m.unroll, lane = t % m.unroll;
    auto& r = run.results[t];
    r.nodes.resize(pg.nodes.size());
    int done = group;
    for (size_t i = 0; i < pg.nodes.size(); ++i) {
      const int cell = m.cell_of[lane][i];
      const CellConfig& c = m.config.cells[cell];
      const int ready = group + c.fire + op_latency(m.config.grid, c.op);
      Sig s = ev.alu(cell, ready);
      if (!s.valid || s.thread != t) run.violations.push_back("thread " + std::to_string(t) + " n" + std::to_string(i) + " missing");
      r.nodes[i] = {s.value, s.written};
      if (c.out_bus) done = std::max(done, ready);
    }
    if (done > group + m.lat) run.violations.push_back("thread " + std::to_string(t) + " outputs later than LAT");
    run.ready_cycle[t] = group + m.lat;
    // Memory sinks read fabric outputs or the operand collector.
    for (const auto& s : pg.sinks) {
      auto val = [&](const NodeSrc& src) -> uint32_t {
        switch (src.kind) {
          case SrcKind::Node: return r.nodes[src.index].value;
          case SrcKind::Reg: return threads[t].regs[src.index];
          case SrcKind::Const: return src.index < static_cast<int>(cbuf.size()) ? cbuf[src.index] : 0;
          case SrcKind::Special: return threads[t].specials[src.index];
          case SrcKind::None: break;
        }
        return 0;
      };
      SinkRequest q;
      q.valid = true;
      if (s.guard.kind == GuardKind::RegPred)
        q.valid = ((threads[t].regs[pred_bit(s.guard.index)] & 1u) != 0) != s.guard.negate;
      else if (s.guard.kind == GuardKind::Node)
        q.valid = ((r.nodes[s.guard.index].value & 1u) != 0) != s.guard.negate;
      q.addr = (s.addr.present() ? val(s.addr) : 0) + static_cast<uint32_t>(s.offset);
      if (s.is_store) q.value = val(s.value);
      r.sinks.push_back(q);
    }
  }
  return run;
}

std::string dump_mapping(const Mapping& m, const PGraph& pg) {
  std::ostringstream os;
  const CgraGrid& g = m.config.grid;
  os << "pg" << pg.id << " unroll " << m.unroll << " LAT " << m.lat << " (" << g.rows << "x" << g.cols << ")\n";
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      const CellConfig& cell = m.config.cells[r * g.cols + c];
      std::string s;
      if (cell.active) {
        s = std::string(opcode_name(cell.op)) + "." + std::to_string(cell.lane) + "@" + std::to_string(cell.fire);
        if (cell.out_bus) s += "*";
      } else {
        bool routes = false;
        for (const auto& d : cell.sw)
          for (SwitchSel x : d) routes |= x != SwitchSel::None;
        s = routes ? "+" : ".";
      }
      os << s;
      for (size_t pad = s.size(); pad < 14; ++pad) os << ' ';
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace dice
