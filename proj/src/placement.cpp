#include "wdse/placement.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace wdse {

DieCoord region_center(const Region& r) {
  return {r.x + (r.w - 1) / 2, r.y + (r.h - 1) / 2};
}

int manhattan(DieCoord a, DieCoord b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

bool MeshLink::operator<(const MeshLink& o) const {
  if (y1 != o.y1) return y1 < o.y1;
  if (x1 != o.x1) return x1 < o.x1;
  if (y2 != o.y2) return y2 < o.y2;
  return x2 < o.x2;
}

MeshLink make_link(int ax, int ay, int bx, int by) {
  if (ay < by || (ay == by && ax <= bx)) return {ax, ay, bx, by};
  return {bx, by, ax, ay};
}

long long RoutedPaths::total_hops() const {
  long long hops = 0;
  for (const auto& p : pipeline) hops += static_cast<long long>(p.links.size());
  for (const auto& p : pairs) hops += static_cast<long long>(p.links.size());
  return hops;
}

namespace {

struct Slot {
  int x = 0, y = 0;
  bool operator==(const Slot&) const = default;
};

Region slot_region(Slot s, int rw, int rh) { return {s.x * rw, s.y * rh, rw, rh}; }

void check_tiling(int pp, int rw, int rh, const MeshGrid& grid) {
  if (pp < 1) throw SpecError("need at least one stage");
  if (rw < 1 || rh < 1) throw SpecError("region shape must be positive");
  if (grid.dies_x % rw != 0 || grid.dies_y % rh != 0)
    throw SpecError("region shape " + std::to_string(rw) + "x" + std::to_string(rh) +
                    " does not tile the " + std::to_string(grid.dies_x) + "x" +
                    std::to_string(grid.dies_y) + " die grid");
  const long long slots =
      static_cast<long long>(grid.dies_x / rw) * (grid.dies_y / rh);
  if (slots < pp)
    throw InfeasibleError("grid holds " + std::to_string(slots) + " regions, need " +
                          std::to_string(pp));
}

// Closest-die endpoint candidates between two disjoint rectangles: the
// coordinate pairs realizing the minimal Manhattan separation per axis.
void axis_candidates(int a_lo, int a_hi, int b_lo, int b_hi,
                     std::vector<std::pair<int, int>>& out) {
  out.clear();
  if (a_hi < b_lo) {
    out.push_back({a_hi, b_lo});
  } else if (b_hi < a_lo) {
    out.push_back({a_lo, b_hi});
  } else {
    const int lo = std::max(a_lo, b_lo);
    const int hi = std::min(a_hi, b_hi);
    for (int v = lo; v <= hi; ++v) out.push_back({v, v});
  }
}

struct RouteQuery {
  DieCoord src;
  DieCoord dst;
};

std::vector<RouteQuery> min_dist_endpoints(const Region& a, const Region& b) {
  std::vector<std::pair<int, int>> xs, ys;
  axis_candidates(a.x, a.x + a.w - 1, b.x, b.x + b.w - 1, xs);
  axis_candidates(a.y, a.y + a.h - 1, b.y, b.y + b.h - 1, ys);
  std::vector<RouteQuery> out;
  out.reserve(xs.size() * ys.size());
  for (const auto& y : ys)
    for (const auto& x : xs)
      out.push_back({{x.first, y.first}, {x.second, y.second}});
  return out;
}

// Minimal-conflict monotone route from src to dst.  All shortest paths stay
// inside the bounding box; a lattice sweep finds the one crossing the fewest
// occupied links, preferring horizontal-first steps on ties.
RoutedPath route_min_conflict(DieCoord src, DieCoord dst,
                              const std::set<MeshLink>& occupied) {
  const int nx = std::abs(dst.x - src.x);
  const int ny = std::abs(dst.y - src.y);
  const int sx = dst.x >= src.x ? 1 : -1;
  const int sy = dst.y >= src.y ? 1 : -1;
  auto at = [&](int i, int j) { return DieCoord{src.x + sx * i, src.y + sy * j}; };
  auto link_cost = [&](DieCoord a, DieCoord b) {
    return occupied.count(make_link(a.x, a.y, b.x, b.y)) ? 1 : 0;
  };

  std::vector<std::vector<int>> cost(nx + 1, std::vector<int>(ny + 1, 0));
  std::vector<std::vector<char>> from_x(nx + 1, std::vector<char>(ny + 1, 0));
  for (int i = 0; i <= nx; ++i) {
    for (int j = 0; j <= ny; ++j) {
      if (i == 0 && j == 0) continue;
      int best = std::numeric_limits<int>::max();
      char via_x = 0;
      if (i > 0) {
        const int c = cost[i - 1][j] + link_cost(at(i - 1, j), at(i, j));
        if (c < best) {
          best = c;
          via_x = 1;
        }
      }
      if (j > 0) {
        const int c = cost[i][j - 1] + link_cost(at(i, j - 1), at(i, j));
        if (c < best) {
          best = c;
          via_x = 0;
        }
      }
      cost[i][j] = best;
      from_x[i][j] = via_x;
    }
  }

  RoutedPath path;
  path.shared_with_pipeline = cost[nx][ny];
  int i = nx, j = ny;
  while (i > 0 || j > 0) {
    if (from_x[i][j]) {
      path.links.push_back(make_link(at(i - 1, j).x, at(i - 1, j).y, at(i, j).x, at(i, j).y));
      --i;
    } else {
      path.links.push_back(make_link(at(i, j - 1).x, at(i, j - 1).y, at(i, j).x, at(i, j).y));
      --j;
    }
  }
  std::reverse(path.links.begin(), path.links.end());
  return path;
}

RoutedPath route_between_regions(const Region& a, const Region& b,
                                 const std::set<MeshLink>& occupied) {
  RoutedPath best;
  int best_conflicts = std::numeric_limits<int>::max();
  bool first = true;
  for (const auto& q : min_dist_endpoints(a, b)) {
    RoutedPath cand = route_min_conflict(q.src, q.dst, occupied);
    if (first || cand.shared_with_pipeline < best_conflicts) {
      best = std::move(cand);
      best_conflicts = best.shared_with_pipeline;
      first = false;
    }
  }
  return best;
}

// Same lattice sweep with real-valued link costs.
RoutedPath route_min_weight(DieCoord src, DieCoord dst,
                            const std::function<double(const MeshLink&)>& weight,
                            double* total) {
  const int nx = std::abs(dst.x - src.x);
  const int ny = std::abs(dst.y - src.y);
  const int sx = dst.x >= src.x ? 1 : -1;
  const int sy = dst.y >= src.y ? 1 : -1;
  auto at = [&](int i, int j) { return DieCoord{src.x + sx * i, src.y + sy * j}; };
  auto link_cost = [&](DieCoord a, DieCoord b) {
    return weight(make_link(a.x, a.y, b.x, b.y));
  };

  std::vector<std::vector<double>> cost(nx + 1, std::vector<double>(ny + 1, 0));
  std::vector<std::vector<char>> from_x(nx + 1, std::vector<char>(ny + 1, 0));
  for (int i = 0; i <= nx; ++i) {
    for (int j = 0; j <= ny; ++j) {
      if (i == 0 && j == 0) continue;
      double best = std::numeric_limits<double>::infinity();
      char via_x = 0;
      if (i > 0) {
        const double c = cost[i - 1][j] + link_cost(at(i - 1, j), at(i, j));
        if (c < best) {
          best = c;
          via_x = 1;
        }
      }
      if (j > 0) {
        const double c = cost[i][j - 1] + link_cost(at(i, j - 1), at(i, j));
        if (c < best) {
          best = c;
          via_x = 0;
        }
      }
      cost[i][j] = best;
      from_x[i][j] = via_x;
    }
  }

  RoutedPath path;
  if (total) *total = cost[nx][ny];
  int i = nx, j = ny;
  while (i > 0 || j > 0) {
    if (from_x[i][j]) {
      path.links.push_back(make_link(at(i - 1, j).x, at(i - 1, j).y, at(i, j).x, at(i, j).y));
      --i;
    } else {
      path.links.push_back(make_link(at(i, j - 1).x, at(i, j - 1).y, at(i, j).x, at(i, j).y));
      --j;
    }
  }
  std::reverse(path.links.begin(), path.links.end());
  return path;
}

void check_stage(const PlacementMap& placement, int stage) {
  if (stage < 0 || stage >= static_cast<int>(placement.regions.size()))
    throw SpecError("route references an unknown stage");
}

}  // namespace

PlacementMap serpentine_placement(int pp, int region_w, int region_h, const MeshGrid& grid) {
  check_tiling(pp, region_w, region_h, grid);
  const int slots_x = grid.dies_x / region_w;
  const int slots_y = grid.dies_y / region_h;
  PlacementMap pm;
  pm.grid = grid;
  pm.region_w = region_w;
  pm.region_h = region_h;
  for (int band = 0; band < slots_y && static_cast<int>(pm.regions.size()) < pp; ++band) {
    for (int i = 0; i < slots_x && static_cast<int>(pm.regions.size()) < pp; ++i) {
      const int sx = (band % 2 == 0) ? i : slots_x - 1 - i;
      pm.regions.push_back(slot_region({sx, band}, region_w, region_h));
    }
  }
  return pm;
}

std::vector<RoutedPath> pipeline_routes(const PlacementMap& placement) {
  std::vector<RoutedPath> out;
  const int pp = static_cast<int>(placement.regions.size());
  for (int i = 0; i + 1 < pp; ++i) {
    RoutedPath p = route_between_regions(placement.regions[i], placement.regions[i + 1], {});
    p.from_stage = i;
    p.to_stage = i + 1;
    out.push_back(std::move(p));
  }
  return out;
}

std::set<MeshLink> link_set(const std::vector<RoutedPath>& paths) {
  std::set<MeshLink> links;
  for (const auto& p : paths)
    for (const auto& l : p.links) links.insert(l);
  return links;
}

RoutedPath route_stage_pair(const PlacementMap& placement, int from, int to,
                            const std::set<MeshLink>& occupied) {
  check_stage(placement, from);
  check_stage(placement, to);
  RoutedPath p =
      route_between_regions(placement.regions[from], placement.regions[to], occupied);
  p.from_stage = from;
  p.to_stage = to;
  p.is_pair = true;
  return p;
}

RoutedPath route_stage_pair_weighted(const PlacementMap& placement, int from, int to,
                                     const std::function<double(const MeshLink&)>& cost,
                                     double* total_cost) {
  check_stage(placement, from);
  check_stage(placement, to);
  RoutedPath best;
  double best_cost = std::numeric_limits<double>::infinity();
  bool first = true;
  for (const auto& q :
       min_dist_endpoints(placement.regions[from], placement.regions[to])) {
    double c = 0;
    RoutedPath cand = route_min_weight(q.src, q.dst, cost, &c);
    if (first || c < best_cost) {
      best = std::move(cand);
      best_cost = c;
      first = false;
    }
  }
  best.from_stage = from;
  best.to_stage = to;
  if (total_cost) *total_cost = best_cost;
  return best;
}

PlacementCost global_cost(const PlacementMap& placement,
                          const std::vector<double>& comm_pp,
                          const std::vector<MemPair>& mem_pairs,
                          const std::vector<double>& comm_pair) {
  const int pp = static_cast<int>(placement.regions.size());
  if (static_cast<int>(comm_pp.size()) != std::max(0, pp - 1))
    throw SpecError("need one pipeline traffic weight per stage boundary");
  if (comm_pair.size() != mem_pairs.size())
    throw SpecError("need one traffic weight per offload pair");

  PlacementCost out;
  out.paths.pipeline = pipeline_routes(placement);
  for (int i = 0; i + 1 < pp; ++i) {
    const int dist = manhattan(region_center(placement.regions[i]),
                               region_center(placement.regions[i + 1]));
    out.cost += static_cast<double>(dist) * comm_pp[i];
  }
  const std::set<MeshLink> pipeline_links = link_set(out.paths.pipeline);

  double pair_dist_sum = 0;
  for (std::size_t k = 0; k < mem_pairs.size(); ++k) {
    const auto& mp = mem_pairs[k];
    RoutedPath p = route_stage_pair(placement, mp.sender, mp.helper, pipeline_links);
    const int dist = manhattan(region_center(placement.regions[mp.sender]),
                               region_center(placement.regions[mp.helper]));
    pair_dist_sum += dist;
    out.cost += static_cast<double>(dist) * comm_pair[k] * (1.0 + p.shared_with_pipeline);
    out.paths.pairs.push_back(std::move(p));
  }
  out.avg_pair_dist = mem_pairs.empty() ? 0.0 : pair_dist_sum / mem_pairs.size();
  return out;
}

namespace {

PlacementMap chain_to_placement(const std::vector<Slot>& chain, int rw, int rh,
                                const MeshGrid& grid) {
  PlacementMap pm;
  pm.grid = grid;
  pm.region_w = rw;
  pm.region_h = rh;
  for (const Slot& s : chain) pm.regions.push_back(slot_region(s, rw, rh));
  return pm;
}

struct ChainSearch {
  int slots_x, slots_y, pp;
  const std::vector<double>* comm_pp;
  const std::vector<MemPair>* mem_pairs;
  const std::vector<double>* comm_pair;
  int rw, rh;
  MeshGrid grid;

  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<Slot> best_chain;

  std::vector<Slot> chain;
  std::vector<char> used;

  bool used_at(Slot s) const { return used[s.y * slots_x + s.x] != 0; }
  void mark(Slot s, bool v) { used[s.y * slots_x + s.x] = v ? 1 : 0; }

  void consider() {
    const PlacementMap pm = chain_to_placement(chain, rw, rh, grid);
    const double c = global_cost(pm, *comm_pp, *mem_pairs, *comm_pair).cost;
    if (c < best_cost) {
      best_cost = c;
      best_chain = chain;
    }
  }

  void extend() {
    if (static_cast<int>(chain.size()) == pp) {
      consider();
      return;
    }
    const Slot cur = chain.back();
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    for (int d = 0; d < 4; ++d) {
      Slot nxt{cur.x + dx[d], cur.y + dy[d]};
      if (nxt.x < 0 || nxt.x >= slots_x || nxt.y < 0 || nxt.y >= slots_y) continue;
      if (used_at(nxt)) continue;
      chain.push_back(nxt);
      mark(nxt, true);
      extend();
      mark(nxt, false);
      chain.pop_back();
    }
  }

  void run() {
    // The pipeline head is anchored to the conventional scan: stage 0 at the
    // origin slot and stage 1 at the scan's successor, so only the tail is
    // re-threaded.
    used.assign(slots_x * slots_y, 0);
    chain.assign(1, Slot{0, 0});
    if (pp > 1) chain.push_back(slots_x > 1 ? Slot{1, 0} : Slot{0, 1});
    for (const Slot& s : chain) mark(s, true);
    extend();
  }
};

std::vector<Slot> serpentine_chain(int pp, int slots_x, int slots_y) {
  std::vector<Slot> chain;
  for (int band = 0; band < slots_y && static_cast<int>(chain.size()) < pp; ++band)
    for (int i = 0; i < slots_x && static_cast<int>(chain.size()) < pp; ++i)
      chain.push_back({(band % 2 == 0) ? i : slots_x - 1 - i, band});
  return chain;
}

}  // namespace

PlacementResult location_aware_placement(int pp, int region_w, int region_h,
                                         const MeshGrid& grid,
                                         const std::vector<double>& comm_pp,
                                         const std::vector<MemPair>& mem_pairs,
                                         const std::vector<double>& comm_pair,
                                         const PlacementSearchParams& params) {
  check_tiling(pp, region_w, region_h, grid);
  const int slots_x = grid.dies_x / region_w;
  const int slots_y = grid.dies_y / region_h;

  PlacementResult result;
  if (pp <= std::max(params.exhaustive_limit, 2)) {
    ChainSearch search;
    search.slots_x = slots_x;
    search.slots_y = slots_y;
    search.pp = pp;
    search.comm_pp = &comm_pp;
    search.mem_pairs = &mem_pairs;
    search.comm_pair = &comm_pair;
    search.rw = region_w;
    search.rh = region_h;
    search.grid = grid;
    search.run();
    result.placement = chain_to_placement(search.best_chain, region_w, region_h, grid);
    result.cost = global_cost(result.placement, comm_pp, mem_pairs, comm_pair);
    return result;
  }

  // Annealing over chains: cut the chain at a random point and regrow the
  // suffix with a random self-avoiding walk.  Rejected regrowths (dead ends)
  // leave the state unchanged.
  result.annealed = true;
  std::mt19937_64 rng(params.seed);
  std::vector<Slot> cur = serpentine_chain(pp, slots_x, slots_y);
  auto eval = [&](const std::vector<Slot>& chain) {
    return global_cost(chain_to_placement(chain, region_w, region_h, grid), comm_pp,
                       mem_pairs, comm_pair)
        .cost;
  };
  double cur_cost = eval(cur);
  std::vector<Slot> best = cur;
  double best_cost = cur_cost;
  double temp = std::max(cur_cost * 0.1, 1e-12);
  const double decay =
      params.anneal_iters > 1 ? std::pow(1e-3, 1.0 / params.anneal_iters) : 1.0;

  for (int iter = 0; iter < params.anneal_iters; ++iter, temp *= decay) {
    // Cut points keep the anchored two-slot head intact.
    std::vector<Slot> cand(cur.begin(),
                           cur.begin() + 2 +
                               static_cast<long>(rng() % static_cast<std::uint64_t>(pp - 2)));
    std::vector<char> used(slots_x * slots_y, 0);
    for (const Slot& s : cand) used[s.y * slots_x + s.x] = 1;
    bool ok = true;
    while (static_cast<int>(cand.size()) < pp) {
      const Slot cur_slot = cand.back();
      Slot options[4];
      int num = 0;
      const int dx[4] = {1, -1, 0, 0};
      const int dy[4] = {0, 0, 1, -1};
      for (int d = 0; d < 4; ++d) {
        Slot nxt{cur_slot.x + dx[d], cur_slot.y + dy[d]};
        if (nxt.x < 0 || nxt.x >= slots_x || nxt.y < 0 || nxt.y >= slots_y) continue;
        if (used[nxt.y * slots_x + nxt.x]) continue;
        options[num++] = nxt;
      }
      if (num == 0) {
        ok = false;
        break;
      }
      const Slot pick = options[rng() % num];
      cand.push_back(pick);
      used[pick.y * slots_x + pick.x] = 1;
    }
    if (!ok) continue;
    const double cand_cost = eval(cand);
    const double delta = cand_cost - cur_cost;
    if (delta <= 0 ||
        std::generate_canonical<double, 53>(rng) < std::exp(-delta / temp)) {
      cur = std::move(cand);
      cur_cost = cand_cost;
      if (cur_cost < best_cost) {
        best = cur;
        best_cost = cur_cost;
      }
    }
  }
  result.placement = chain_to_placement(best, region_w, region_h, grid);
  result.cost = global_cost(result.placement, comm_pp, mem_pairs, comm_pair);
  return result;
}

std::string ascii_diagram(const PlacementMap& placement) {
  std::vector<std::vector<int>> owner(placement.grid.dies_y,
                                      std::vector<int>(placement.grid.dies_x, -1));
  for (std::size_t s = 0; s < placement.regions.size(); ++s) {
    const Region& r = placement.regions[s];
    for (int y = r.y; y < r.y + r.h; ++y)
      for (int x = r.x; x < r.x + r.w; ++x)
        if (y >= 0 && y < placement.grid.dies_y && x >= 0 && x < placement.grid.dies_x)
          owner[y][x] = static_cast<int>(s);
  }
  std::ostringstream os;
  for (int y = 0; y < placement.grid.dies_y; ++y) {
    for (int x = 0; x < placement.grid.dies_x; ++x) {
      if (owner[y][x] < 0)
        os << "  . ";
      else {
        os.width(3);
        os << owner[y][x];
        os << ' ';
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace wdse
