#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <vector>

#include "wdse/recomp.hpp"
#include "wdse/units.hpp"

namespace wdse {

struct MeshGrid {
  int dies_x = 0;
  int dies_y = 0;
  double link_bandwidth = 0;  // bytes/s per directed mesh link
};

// Axis-aligned rectangle of dies owned by one stage.
struct Region {
  int x = 0, y = 0;  // anchor (top-left, smallest coordinates)
  int w = 1, h = 1;
  bool operator==(const Region&) const = default;
};

// Region center in die coordinates, fractional halves rounded toward the
// anchor so the center is always a real die.
struct DieCoord {
  int x = 0, y = 0;
};
DieCoord region_center(const Region& r);
int manhattan(DieCoord a, DieCoord b);

struct PlacementMap {
  MeshGrid grid;
  int region_w = 1, region_h = 1;
  std::vector<Region> regions;  // index = stage
};

// Undirected mesh link with endpoints in canonical order.
struct MeshLink {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool operator==(const MeshLink&) const = default;
  bool operator<(const MeshLink& o) const;
};
MeshLink make_link(int ax, int ay, int bx, int by);

struct RoutedPath {
  int from_stage = 0;
  int to_stage = 0;
  bool is_pair = false;
  std::vector<MeshLink> links;  // empty when the regions overlap boundary-free
  int shared_with_pipeline = 0; // the conflict count for pair paths
};

struct RoutedPaths {
  std::vector<RoutedPath> pipeline;  // one per stage boundary
  std::vector<RoutedPath> pairs;     // one per offload pair
  long long total_hops() const;
};

struct PlacementCost {
  double cost = 0;            // hop-weighted traffic with conflict punishment
  double avg_pair_dist = 0;   // mean center-to-center pair distance in hops
  RoutedPaths paths;
};

// Boustrophedon layout: region-sized slots fill the grid row band by row
// band, alternating direction, so consecutive stages always abut.
PlacementMap serpentine_placement(int pp, int region_w, int region_h, const MeshGrid& grid);

// Traffic-weighted placement objective:
//   sum_i dist(center_i, center_{i+1}) * comm_pp[i]
// + sum_p dist(center_s, center_h) * comm_pair[p] * (1 + shared_links)
// Pair paths route boundary-to-boundary over the mesh; among all shortest
// routes the one sharing fewest links with the pipeline routes is charged.
PlacementCost global_cost(const PlacementMap& placement,
                          const std::vector<double>& comm_pp,
                          const std::vector<MemPair>& mem_pairs,
                          const std::vector<double>& comm_pair);

struct PlacementSearchParams {
  int exhaustive_limit = 10;  // stage counts above this use annealing
  int anneal_iters = 2000;
  std::uint64_t seed = 1;
};

struct PlacementResult {
  PlacementMap placement;
  PlacementCost cost;
  bool annealed = false;  // true when the exhaustive bound was exceeded
};

// Minimizes global_cost over stage chains (sequences of pairwise-adjacent
// region slots), which preserves pipeline adjacency by construction.  The
// pipeline head is anchored: stage 0 stays at the scan origin and stage 1 at
// the scan's next slot, so the ingress edge and initial flow direction match
// the serpentine layout and only the tail stages are re-threaded.
// Exhaustive for small stage counts, seeded simulated annealing beyond.
PlacementResult location_aware_placement(int pp, int region_w, int region_h,
                                         const MeshGrid& grid,
                                         const std::vector<double>& comm_pp,
                                         const std::vector<MemPair>& mem_pairs,
                                         const std::vector<double>& comm_pair,
                                         const PlacementSearchParams& params);

// Routes between consecutive stages, conflict-free ordering as in
// global_cost.  Collect their links to seed conflict-aware pair routing.
std::vector<RoutedPath> pipeline_routes(const PlacementMap& placement);

std::set<MeshLink> link_set(const std::vector<RoutedPath>& paths);

// Shortest route between two stages' regions crossing the fewest occupied
// links; shared_with_pipeline carries the crossing count.
RoutedPath route_stage_pair(const PlacementMap& placement, int from, int to,
                            const std::set<MeshLink>& occupied);

// Shortest route minimizing an arbitrary nonnegative per-link cost; ties
// resolve to the horizontal-first path from the first endpoint candidate.
RoutedPath route_stage_pair_weighted(const PlacementMap& placement, int from, int to,
                                     const std::function<double(const MeshLink&)>& cost,
                                     double* total_cost);

// Text diagram of the die grid with each die labeled by owning stage.
std::string ascii_diagram(const PlacementMap& placement);

}  // namespace wdse
