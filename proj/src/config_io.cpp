#include "wdse/config_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"
#include "wdse/placement.hpp"
#include "wdse/version.hpp"

namespace wdse {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

[[noreturn]] void schema_error(const std::string& ctx, const std::string& msg) {
  throw SpecError(ctx + ": " + msg);
}

void expect_object(const json& v, const std::string& ctx) {
  if (!v.is_object()) schema_error(ctx, "expected an object");
}

void check_keys(const json& obj, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  expect_object(obj, ctx);
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        known = true;
        break;
      }
    if (!known) schema_error(ctx, "unknown key '" + item.key() + "'");
  }
}

const json* find(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double get_num(const json& obj, const std::string& ctx, const char* key) {
  const json* v = find(obj, key);
  if (!v) schema_error(ctx, std::string("missing key '") + key + "'");
  if (!v->is_number()) schema_error(ctx + "." + key, "expected a number");
  return v->get<double>();
}

double get_num_or(const json& obj, const std::string& ctx, const char* key, double dflt) {
  return find(obj, key) ? get_num(obj, ctx, key) : dflt;
}

long long get_int(const json& obj, const std::string& ctx, const char* key) {
  const json* v = find(obj, key);
  if (!v) schema_error(ctx, std::string("missing key '") + key + "'");
  if (v->is_number_integer()) return v->get<long long>();
  if (v->is_number()) {
    const double d = v->get<double>();
    if (d == std::floor(d)) return static_cast<long long>(d);
  }
  schema_error(ctx + "." + key, "expected an integer");
}

long long get_int_or(const json& obj, const std::string& ctx, const char* key,
                     long long dflt) {
  return find(obj, key) ? get_int(obj, ctx, key) : dflt;
}

bool get_bool_or(const json& obj, const std::string& ctx, const char* key, bool dflt) {
  const json* v = find(obj, key);
  if (!v) return dflt;
  if (!v->is_boolean()) schema_error(ctx + "." + key, "expected a boolean");
  return v->get<bool>();
}

std::string get_str(const json& obj, const std::string& ctx, const char* key) {
  const json* v = find(obj, key);
  if (!v) schema_error(ctx, std::string("missing key '") + key + "'");
  if (!v->is_string()) schema_error(ctx + "." + key, "expected a string");
  return v->get<std::string>();
}

std::pair<int, int> get_int_pair(const json& v, const std::string& ctx) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() ||
      !v[1].is_number_integer())
    schema_error(ctx, "expected [int, int]");
  return {v[0].get<int>(), v[1].get<int>()};
}

ModelConfig parse_model(const json& v, const std::string& ctx) {
  if (v.is_string()) return model_preset(v.get<std::string>());
  check_keys(v, ctx,
             {"name", "num_layers", "hidden_size", "num_heads", "seq_len", "vocab_size",
              "param_count", "moe_experts"});
  ModelConfig m;
  m.name = find(v, "name") ? get_str(v, ctx, "name") : "custom";
  m.num_layers = static_cast<int>(get_int(v, ctx, "num_layers"));
  m.hidden_size = get_int(v, ctx, "hidden_size");
  m.num_heads = static_cast<int>(get_int(v, ctx, "num_heads"));
  m.seq_len = get_int(v, ctx, "seq_len");
  m.vocab_size = get_int(v, ctx, "vocab_size");
  m.param_count = get_num_or(v, ctx, "param_count", 0.0);
  m.moe_experts = static_cast<int>(get_int_or(v, ctx, "moe_experts", 1));
  return m;
}

DieSpec parse_die(const json& v, const std::string& ctx) {
  if (v.is_string()) return die_preset(v.get<std::string>());
  check_keys(v, ctx,
             {"name", "width_mm", "height_mm", "core_rows", "core_cols",
              "core_peak_flops", "core_sram_bytes", "core_frequency_hz",
              "edge_io_bandwidth", "dram_io_fraction"});
  DieSpec d;
  d.name = find(v, "name") ? get_str(v, ctx, "name") : "custom-die";
  d.width_mm = get_num(v, ctx, "width_mm");
  d.height_mm = get_num(v, ctx, "height_mm");
  d.core_rows = static_cast<int>(get_int(v, ctx, "core_rows"));
  d.core_cols = static_cast<int>(get_int(v, ctx, "core_cols"));
  d.core.peak_flops = get_num(v, ctx, "core_peak_flops");
  d.core.sram_bytes = get_int(v, ctx, "core_sram_bytes");
  d.core.frequency_hz = get_num_or(v, ctx, "core_frequency_hz", 2e9);
  d.edge_io_bandwidth = get_num(v, ctx, "edge_io_bandwidth");
  d.dram_io_fraction = get_num(v, ctx, "dram_io_fraction");
  return d;
}

DramChipletSpec parse_dram(const json& v, const std::string& ctx) {
  if (v.is_string()) return dram_preset(v.get<std::string>());
  check_keys(v, ctx, {"name", "width_mm", "height_mm", "capacity_bytes", "bandwidth"});
  DramChipletSpec d;
  d.name = find(v, "name") ? get_str(v, ctx, "name") : "custom-dram";
  d.width_mm = get_num(v, ctx, "width_mm");
  d.height_mm = get_num(v, ctx, "height_mm");
  d.capacity_bytes = get_int(v, ctx, "capacity_bytes");
  d.bandwidth = get_num(v, ctx, "bandwidth");
  return d;
}

WaferConfig parse_wafer(const json& v, const std::string& ctx) {
  if (v.is_string()) return wafer_preset(v.get<std::string>());
  check_keys(v, ctx,
             {"label", "grid", "die", "dram_chiplets_per_die", "dram", "d2d_bandwidth",
              "d2d_latency", "wafer_mm"});
  WaferConfig cfg;
  cfg.label = find(v, "label") ? get_str(v, ctx, "label") : "custom-wafer";
  const json* grid = find(v, "grid");
  if (!grid) schema_error(ctx, "missing key 'grid'");
  std::tie(cfg.grid_x, cfg.grid_y) = get_int_pair(*grid, ctx + ".grid");
  const json* die = find(v, "die");
  if (!die) schema_error(ctx, "missing key 'die'");
  cfg.die = parse_die(*die, ctx + ".die");
  cfg.dram_chiplets_per_die =
      static_cast<int>(get_int(v, ctx, "dram_chiplets_per_die"));
  if (cfg.dram_chiplets_per_die > 0) {
    const json* dram = find(v, "dram");
    if (!dram) schema_error(ctx, "missing key 'dram'");
    cfg.dram = parse_dram(*dram, ctx + ".dram");
  }
  cfg.d2d_bandwidth = get_num(v, ctx, "d2d_bandwidth");
  cfg.d2d_latency = get_num_or(v, ctx, "d2d_latency", 1e-7);
  if (const json* wm = find(v, "wafer_mm")) {
    const auto [w, h] = get_int_pair(*wm, ctx + ".wafer_mm");
    cfg.wafer_width_mm = w;
    cfg.wafer_height_mm = h;
  }
  const Feasibility f = validate_config(cfg);
  if (!f.ok) {
    std::string msg = "wafer '" + cfg.label + "' is infeasible:";
    for (const auto& viol : f.violations) msg += " [" + viol + "]";
    throw InfeasibleError(msg);
  }
  return cfg;
}

TemplateRanges parse_templates(const json& v, const std::string& ctx) {
  check_keys(v, ctx,
             {"grids", "dies", "dram_chiplet_counts", "dram_chiplets", "d2d_bandwidths",
              "d2d_latencies", "wafer_mm"});
  TemplateRanges r;
  const json* grids = find(v, "grids");
  if (!grids || !grids->is_array() || grids->empty())
    schema_error(ctx, "'grids' must be a non-empty array");
  for (std::size_t i = 0; i < grids->size(); ++i)
    r.grids.push_back(get_int_pair((*grids)[i], ctx + ".grids"));
  const json* dies = find(v, "dies");
  if (!dies || !dies->is_array() || dies->empty())
    schema_error(ctx, "'dies' must be a non-empty array");
  for (std::size_t i = 0; i < dies->size(); ++i)
    r.dies.push_back(parse_die((*dies)[i], ctx + ".dies"));
  const json* counts = find(v, "dram_chiplet_counts");
  if (!counts || !counts->is_array() || counts->empty())
    schema_error(ctx, "'dram_chiplet_counts' must be a non-empty array");
  for (const auto& c : *counts) {
    if (!c.is_number_integer()) schema_error(ctx + ".dram_chiplet_counts", "expected integers");
    r.dram_chiplet_counts.push_back(c.get<int>());
  }
  const json* drams = find(v, "dram_chiplets");
  if (!drams || !drams->is_array() || drams->empty())
    schema_error(ctx, "'dram_chiplets' must be a non-empty array");
  for (std::size_t i = 0; i < drams->size(); ++i)
    r.dram_chiplets.push_back(parse_dram((*drams)[i], ctx + ".dram_chiplets"));
  const json* bws = find(v, "d2d_bandwidths");
  if (!bws || !bws->is_array() || bws->empty())
    schema_error(ctx, "'d2d_bandwidths' must be a non-empty array");
  for (const auto& b : *bws) {
    if (!b.is_number()) schema_error(ctx + ".d2d_bandwidths", "expected numbers");
    r.d2d_bandwidths.push_back(b.get<double>());
  }
  if (const json* lats = find(v, "d2d_latencies")) {
    if (!lats->is_array() || lats->empty())
      schema_error(ctx, "'d2d_latencies' must be a non-empty array");
    for (const auto& l : *lats) {
      if (!l.is_number()) schema_error(ctx + ".d2d_latencies", "expected numbers");
      r.d2d_latencies.push_back(l.get<double>());
    }
  } else {
    r.d2d_latencies.push_back(1e-7);
  }
  if (const json* wm = find(v, "wafer_mm")) {
    const auto [w, h] = get_int_pair(*wm, ctx + ".wafer_mm");
    r.wafer_width_mm = w;
    r.wafer_height_mm = h;
  }
  return r;
}

StrategyChoice parse_strategy(const json& v, const std::string& ctx) {
  check_keys(v, ctx, {"tp", "pp", "region", "split"});
  StrategyChoice s;
  s.tp = static_cast<int>(get_int(v, ctx, "tp"));
  s.pp = static_cast<int>(get_int(v, ctx, "pp"));
  if (const json* region = find(v, "region"))
    std::tie(s.region_w, s.region_h) = get_int_pair(*region, ctx + ".region");
  if (const json* split = find(v, "split")) {
    check_keys(*split, ctx + ".split", {"b", "s", "h", "k"});
    s.fb = static_cast<int>(get_int_or(*split, ctx + ".split", "b", 1));
    s.fs = static_cast<int>(get_int_or(*split, ctx + ".split", "s", 1));
    s.fh = static_cast<int>(get_int_or(*split, ctx + ".split", "h", 0));
    s.fk = static_cast<int>(get_int_or(*split, ctx + ".split", "k", 0));
  }
  return s;
}

CostParams parse_cost(const json& v, const std::string& ctx) {
  check_keys(v, ctx, {"utilization", "alpha_link", "bwd_ema_factor", "elem_bytes"});
  CostParams p;
  p.utilization = get_num_or(v, ctx, "utilization", p.utilization);
  p.alpha_link = get_num_or(v, ctx, "alpha_link", p.alpha_link);
  p.bwd_ema_factor = get_num_or(v, ctx, "bwd_ema_factor", p.bwd_ema_factor);
  p.elem_bytes = get_int_or(v, ctx, "elem_bytes", p.elem_bytes);
  if (p.utilization <= 0 || p.utilization > 1)
    schema_error(ctx + ".utilization", "must lie in (0, 1]");
  if (p.elem_bytes < 1) schema_error(ctx + ".elem_bytes", "must be positive");
  return p;
}

SearchOptions parse_search(const json& v, const std::string& ctx) {
  check_keys(v, ctx,
             {"omega", "steps", "population", "seed", "threads", "fast", "quantum_bytes",
              "punishment", "eta", "exhaustive_limit", "chain_budget", "anneal_iters",
              "full_splits"});
  SearchOptions s;
  s.omega = get_num_or(v, ctx, "omega", s.omega);
  s.ga_steps = static_cast<int>(get_int_or(v, ctx, "steps", s.ga_steps));
  s.population = static_cast<int>(get_int_or(v, ctx, "population", s.population));
  s.seed = static_cast<std::uint64_t>(get_int_or(v, ctx, "seed", 1));
  s.threads = static_cast<int>(get_int_or(v, ctx, "threads", s.threads));
  s.fast = get_bool_or(v, ctx, "fast", s.fast);
  s.quantum = get_int_or(v, ctx, "quantum_bytes", s.quantum);
  s.punishment = get_num_or(v, ctx, "punishment", s.punishment);
  s.eta = get_num_or(v, ctx, "eta", s.eta);
  s.exhaustive_limit =
      static_cast<int>(get_int_or(v, ctx, "exhaustive_limit", s.exhaustive_limit));
  s.chain_budget = get_int_or(v, ctx, "chain_budget", s.chain_budget);
  s.anneal_iters = static_cast<int>(get_int_or(v, ctx, "anneal_iters", s.anneal_iters));
  s.full_splits = get_bool_or(v, ctx, "full_splits", s.full_splits);
  if (s.quantum <= 0) schema_error(ctx + ".quantum_bytes", "must be positive");
  if (s.omega < 0 || s.omega > 1) schema_error(ctx + ".omega", "must lie in [0, 1]");
  return s;
}

// --- Serialization helpers -----------------------------------------------------

ojson wafer_to_json(const WaferConfig& w) {
  ojson j;
  j["label"] = w.label;
  j["grid"] = {w.grid_x, w.grid_y};
  j["die"] = {{"name", w.die.name},
              {"width_mm", w.die.width_mm},
              {"height_mm", w.die.height_mm},
              {"core_rows", w.die.core_rows},
              {"core_cols", w.die.core_cols},
              {"core_peak_flops", w.die.core.peak_flops},
              {"core_sram_bytes", w.die.core.sram_bytes},
              {"core_frequency_hz", w.die.core.frequency_hz},
              {"edge_io_bandwidth", w.die.edge_io_bandwidth},
              {"dram_io_fraction", w.die.dram_io_fraction}};
  j["dram_chiplets_per_die"] = w.dram_chiplets_per_die;
  j["dram"] = {{"name", w.dram.name},
               {"width_mm", w.dram.width_mm},
               {"height_mm", w.dram.height_mm},
               {"capacity_bytes", w.dram.capacity_bytes},
               {"bandwidth", w.dram.bandwidth}};
  j["d2d_bandwidth"] = w.d2d_bandwidth;
  j["d2d_latency"] = w.d2d_latency;
  j["wafer_mm"] = {w.wafer_width_mm, w.wafer_height_mm};
  j["derived"] = {{"die_count", w.die_count()},
                  {"die_flops", w.die_flops()},
                  {"die_sram_bytes", w.die_sram_bytes()},
                  {"die_dram_bytes", w.die_dram_bytes()},
                  {"die_dram_bandwidth", w.die_dram_bandwidth()},
                  {"wafer_flops", w.wafer_flops()},
                  {"wafer_dram_bytes", w.wafer_dram_bytes()}};
  return j;
}

ojson workload_to_json(const TrainingWorkload& w) {
  ojson j;
  j["model"] = {{"name", w.model.name},
                {"num_layers", w.model.num_layers},
                {"hidden_size", w.model.hidden_size},
                {"num_heads", w.model.num_heads},
                {"seq_len", w.model.seq_len},
                {"vocab_size", w.model.vocab_size},
                {"param_count", w.params()}};
  j["microbatch_size"] = w.microbatch_size;
  j["num_microbatches"] = w.num_microbatches;
  return j;
}

ojson strategy_to_json(const StrategyConfig& s) {
  ojson j;
  j["tp"] = s.tp;
  j["pp"] = s.pp;
  j["region"] = {s.split.region_w, s.split.region_h};
  j["split"] = {{"b", s.split.fb}, {"s", s.split.fs}, {"h", s.split.fh}, {"k", s.split.fk}};
  j["store_mask"] = s.recomp.store_mask;
  j["stored_bytes"] = s.recomp.stored_bytes;
  j["demand_bytes"] = s.recomp.demand_bytes;
  ojson pairs = ojson::array();
  for (const auto& p : s.alloc)
    pairs.push_back({{"sender", p.sender}, {"helper", p.helper}, {"bytes", p.bytes}});
  j["offload_pairs"] = pairs;
  ojson regions = ojson::array();
  for (const auto& r : s.placement.regions) regions.push_back({r.x, r.y});
  j["placement"] = {{"grid", {s.placement.grid.dies_x, s.placement.grid.dies_y}},
                    {"link_bandwidth", s.placement.grid.link_bandwidth},
                    {"region", {s.placement.region_w, s.placement.region_h}},
                    {"regions", regions}};
  return j;
}

ojson metrics_to_json(const EvaluationReport& r) {
  ojson j;
  j["iteration_time"] = r.iteration_time;
  j["t_max"] = r.t_max;
  j["throughput"] = r.throughput;
  j["useful_flops"] = r.useful_flops;
  j["recompute_flops"] = r.recompute_flops;
  j["placement_cost"] = r.placement_cost;
  j["avg_pair_dist"] = r.avg_pair_dist;
  j["total_hops"] = r.total_hops;
  j["compute_utilization"] = r.compute_utilization;
  j["dram_bw_utilization"] = r.dram_bw_utilization;
  j["link_utilization"] = r.link_utilization;
  j["offload_stall"] = r.offload_stall;
  j["ring_fallback"] = r.ring_fallback;
  j["memory_ok"] = r.memory_ok;
  return j;
}

ojson stages_to_json(const EvaluationReport& r) {
  ojson arr = ojson::array();
  for (std::size_t t = 0; t < r.stages.size(); ++t) {
    const auto& s = r.stages[t];
    arr.push_back({{"stage", t},
                   {"layers", s.layers},
                   {"fwd", s.fwd},
                   {"bwd", s.bwd},
                   {"recompute", s.recompute},
                   {"demand", s.demand},
                   {"capacity", s.capacity},
                   {"offloaded", s.offloaded},
                   {"received", s.received},
                   {"peak_live", s.peak_live}});
  }
  return arr;
}

ojson tool_to_json(std::uint64_t input_hash) {
  ojson j;
  j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  j["input_hash"] = format_hash(input_hash);
  return j;
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

PlacementMap placement_from_json(const json& p) {
  PlacementMap pm;
  pm.grid.dies_x = p.at("grid")[0].get<int>();
  pm.grid.dies_y = p.at("grid")[1].get<int>();
  pm.grid.link_bandwidth = p.at("link_bandwidth").get<double>();
  pm.region_w = p.at("region")[0].get<int>();
  pm.region_h = p.at("region")[1].get<int>();
  for (const auto& r : p.at("regions"))
    pm.regions.push_back({r[0].get<int>(), r[1].get<int>(), pm.region_w, pm.region_h});
  return pm;
}

}  // namespace

RunSpec parse_run_spec(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SpecError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "config",
             {"model", "microbatch_size", "num_microbatches", "wafers", "templates",
              "strategy", "cost", "search", "perf_cache"});

  RunSpec spec;
  const json* model = find(root, "model");
  if (!model) schema_error("config", "missing key 'model'");
  spec.workload.model = parse_model(*model, "config.model");
  spec.workload.microbatch_size = get_int_or(root, "config", "microbatch_size", 1);
  spec.workload.num_microbatches =
      static_cast<int>(get_int_or(root, "config", "num_microbatches", 1));
  if (spec.workload.microbatch_size < 1)
    schema_error("config.microbatch_size", "must be positive");
  if (spec.workload.num_microbatches < 1)
    schema_error("config.num_microbatches", "must be positive");

  if (const json* wafers = find(root, "wafers")) {
    if (!wafers->is_array() || wafers->empty())
      schema_error("config.wafers", "expected a non-empty array");
    for (std::size_t i = 0; i < wafers->size(); ++i)
      spec.wafers.push_back(
          parse_wafer((*wafers)[i], "config.wafers[" + std::to_string(i) + "]"));
  }
  if (const json* templates = find(root, "templates"))
    spec.templates = parse_templates(*templates, "config.templates");
  if (const json* strategy = find(root, "strategy"))
    spec.strategy = parse_strategy(*strategy, "config.strategy");
  if (const json* cost = find(root, "cost"))
    spec.cost = parse_cost(*cost, "config.cost");
  if (const json* search = find(root, "search"))
    spec.search = parse_search(*search, "config.search");
  if (find(root, "perf_cache")) spec.perf_cache = get_str(root, "config", "perf_cache");
  return spec;
}

RunSpec load_run_spec(const std::string& path) {
  return parse_run_spec(read_text_file(path));
}

DieSpec die_preset(const std::string& name) {
  DieSpec d;
  d.name = name;
  d.core.peak_flops = 2.04e12;
  d.core.sram_bytes = 1310720;  // 1.25 MiB scratchpad per core
  d.core.frequency_hz = 2e9;
  d.edge_io_bandwidth = 12e12;
  d.dram_io_fraction = 0.25;
  if (name == "core16x16") {
    d.width_mm = 21.92;
    d.height_mm = 22.81;
    d.core_rows = 16;
    d.core_cols = 16;
  } else if (name == "core18x18") {
    d.width_mm = 25.5;
    d.height_mm = 25.2;
    d.core_rows = 18;
    d.core_cols = 18;
  } else {
    throw SpecError("unknown die preset: " + name);
  }
  return d;
}

DramChipletSpec dram_preset(const std::string& name) {
  DramChipletSpec d;
  d.name = name;
  d.width_mm = 3.5;
  d.height_mm = 5.5;
  if (name == "dram-12g-250") {
    d.capacity_bytes = 12 * GB;
    d.bandwidth = 0.25e12;
  } else if (name == "dram-16g-375") {
    d.capacity_bytes = 16 * GB;
    d.bandwidth = 0.375e12;
  } else if (name == "dram-17g5-500") {
    d.capacity_bytes = 17500000000;
    d.bandwidth = 0.5e12;
  } else if (name == "dram-16g-417") {
    d.capacity_bytes = 16 * GB;
    d.bandwidth = 2.5e12 / 6.0;
  } else {
    throw SpecError("unknown DRAM chiplet preset: " + name);
  }
  return d;
}

WaferConfig wafer_preset(const std::string& name) {
  WaferConfig cfg;
  cfg.label = name;
  cfg.wafer_width_mm = 204;
  cfg.wafer_height_mm = 204;
  cfg.d2d_latency = 1e-7;
  if (name == "mesh8x8-48g") {
    cfg.grid_x = 8;
    cfg.grid_y = 8;
    cfg.die = die_preset("core16x16");
    cfg.dram_chiplets_per_die = 4;
    cfg.dram = dram_preset("dram-12g-250");
    cfg.d2d_bandwidth = 4.5e12;
  } else if (name == "mesh7x8-64g") {
    cfg.grid_x = 7;
    cfg.grid_y = 8;
    cfg.die = die_preset("core18x18");
    cfg.dram_chiplets_per_die = 4;
    cfg.dram = dram_preset("dram-16g-375");
    cfg.d2d_bandwidth = 4.5e12;
  } else if (name == "mesh7x8-70g") {
    cfg.grid_x = 7;
    cfg.grid_y = 8;
    cfg.die = die_preset("core18x18");
    cfg.dram_chiplets_per_die = 4;
    cfg.dram = dram_preset("dram-17g5-500");
    cfg.d2d_bandwidth = 4e12;
  } else if (name == "mesh6x8-96g") {
    cfg.grid_x = 6;
    cfg.grid_y = 8;
    cfg.die = die_preset("core18x18");
    cfg.dram_chiplets_per_die = 6;
    cfg.dram = dram_preset("dram-16g-417");
    cfg.d2d_bandwidth = 3.5e12;
  } else {
    throw SpecError("unknown wafer preset: " + name);
  }
  const Feasibility f = validate_config(cfg);
  if (!f.ok) throw SpecError("preset '" + name + "' fails validation");
  return cfg;
}

std::vector<std::string> wafer_preset_names() {
  return {"mesh8x8-48g", "mesh7x8-64g", "mesh7x8-70g", "mesh6x8-96g"};
}

std::string format_hash(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string wafer_catalog_json(const std::vector<WaferConfig>& wafers,
                               std::uint64_t input_hash) {
  ojson j = tool_to_json(input_hash);
  j["kind"] = "wafer_catalog";
  ojson arr = ojson::array();
  for (const auto& w : wafers) arr.push_back(wafer_to_json(w));
  j["wafers"] = arr;
  return j.dump(2) + "\n";
}

std::string wafer_catalog_csv(const std::vector<WaferConfig>& wafers) {
  std::ostringstream os;
  os << "label,grid_x,grid_y,die,die_count,die_flops,dram_chiplets,die_dram_bytes,"
        "die_dram_bandwidth,d2d_bandwidth\n";
  for (const auto& w : wafers) {
    os << csv_quote(w.label) << "," << w.grid_x << "," << w.grid_y << ","
       << csv_quote(w.die.name) << "," << w.die_count() << "," << fmt(w.die_flops())
       << "," << w.dram_chiplets_per_die << "," << w.die_dram_bytes() << ","
       << fmt(w.die_dram_bandwidth()) << "," << fmt(w.d2d_bandwidth) << "\n";
  }
  return os.str();
}

std::string evaluation_json(const WaferConfig& wafer, const TrainingWorkload& workload,
                            const StrategyConfig& strategy, const EvaluationReport& report,
                            std::uint64_t input_hash) {
  ojson j = tool_to_json(input_hash);
  j["kind"] = "evaluation";
  j["wafer"] = wafer_to_json(wafer);
  j["workload"] = workload_to_json(workload);
  j["strategy"] = strategy_to_json(strategy);
  j["metrics"] = metrics_to_json(report);
  j["stages"] = stages_to_json(report);
  return j.dump(2) + "\n";
}

std::string stages_csv(const EvaluationReport& report) {
  std::ostringstream os;
  os << "stage,layers,fwd,bwd,recompute,demand,capacity,offloaded,received,peak_live\n";
  for (std::size_t t = 0; t < report.stages.size(); ++t) {
    const auto& s = report.stages[t];
    os << t << "," << s.layers << "," << fmt(s.fwd) << "," << fmt(s.bwd) << ","
       << fmt(s.recompute) << "," << s.demand << "," << s.capacity << "," << s.offloaded
       << "," << s.received << "," << s.peak_live << "\n";
  }
  return os.str();
}

std::string candidates_csv(const std::vector<CandidateOutcome>& candidates) {
  std::ostringstream os;
  os << "mp,tp,pp,region_w,region_h,fb,fs,fh,fk,disposition,throughput,iteration_time,"
        "t_max,placement_cost\n";
  for (const auto& c : candidates) {
    os << c.mp << "," << c.tp << "," << c.pp << "," << c.split.region_w << ","
       << c.split.region_h << "," << c.split.fb << "," << c.split.fs << "," << c.split.fh
       << "," << c.split.fk << "," << csv_quote(c.disposition) << ","
       << fmt(c.throughput) << "," << fmt(c.iteration_time) << "," << fmt(c.t_max) << ","
       << fmt(c.placement_cost) << "\n";
  }
  return os.str();
}

std::string search_json(const WaferConfig& wafer, const TrainingWorkload& workload,
                        const SearchResult& result, std::uint64_t input_hash) {
  ojson j = tool_to_json(input_hash);
  j["kind"] = "search";
  j["wafer"] = wafer_to_json(wafer);
  j["workload"] = workload_to_json(workload);
  j["feasible"] = result.feasible;
  j["verdict"] = result.verdict;

  int evaluated = 0, delegated = 0, pruned = 0, infeasible = 0;
  for (const auto& c : result.candidates) {
    if (c.disposition == "evaluated") ++evaluated;
    else if (c.disposition == "delegated") ++delegated;
    else if (c.disposition.rfind("pruned", 0) == 0) ++pruned;
    else ++infeasible;
  }
  j["candidates"] = {{"total", result.candidates.size()},
                     {"evaluated", evaluated},
                     {"delegated", delegated},
                     {"pruned", pruned},
                     {"infeasible", infeasible}};

  if (result.feasible) {
    j["best"] = strategy_to_json(result.best);
    j["metrics"] = metrics_to_json(result.best_report);
    j["stages"] = stages_to_json(result.best_report);
    j["baseline"] = {{"total", result.baseline.total},
                     {"c_comp", result.baseline.c_comp},
                     {"c_recomp", result.baseline.c_recomp},
                     {"c_access", result.baseline.c_access},
                     {"c_comm", result.baseline.c_comm},
                     {"recompute_fraction", result.baseline.recompute_fraction},
                     {"tp", result.baseline.tp},
                     {"pp", result.baseline.pp}};
    j["ga"] = {{"best_fitness",
                result.ga.best_trace.empty() ? 1.0 : result.ga.best_trace.back()},
               {"evaluations", result.ga.evaluations},
               {"rejected_mutations", result.ga.rejected_mutations},
               {"trace", result.ga.best_trace}};
  }
  return j.dump(2) + "\n";
}

std::string ranking_csv(const std::vector<std::pair<WaferConfig, SearchResult>>& ranked) {
  std::ostringstream os;
  os << "rank,wafer,feasible,tp,pp,throughput,iteration_time,baseline_total,"
        "baseline_rank\n";
  // Baseline ranks order feasible rows by ascending closed-form cost.
  std::vector<std::size_t> by_baseline;
  for (std::size_t i = 0; i < ranked.size(); ++i)
    if (ranked[i].second.feasible) by_baseline.push_back(i);
  std::stable_sort(by_baseline.begin(), by_baseline.end(),
                   [&](std::size_t a, std::size_t b) {
                     return ranked[a].second.baseline.total <
                            ranked[b].second.baseline.total;
                   });
  std::vector<int> baseline_rank(ranked.size(), 0);
  for (std::size_t r = 0; r < by_baseline.size(); ++r)
    baseline_rank[by_baseline[r]] = static_cast<int>(r) + 1;

  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& [wafer, res] = ranked[i];
    os << (i + 1) << "," << csv_quote(wafer.label) << ","
       << (res.feasible ? "true" : "false") << "," << res.best.tp << "," << res.best.pp
       << "," << fmt(res.best_report.throughput) << ","
       << fmt(res.best_report.iteration_time) << "," << fmt(res.baseline.total) << ","
       << baseline_rank[i] << "\n";
  }
  return os.str();
}

std::string render_report_text(const std::string& report_json_text) {
  json j;
  try {
    j = json::parse(report_json_text);
  } catch (const json::parse_error& e) {
    throw SpecError(std::string("report is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("kind"))
    throw SpecError("report: missing 'kind'");
  const std::string kind = j.at("kind").get<std::string>();

  std::ostringstream os;
  os << j.at("tool").at("name").get<std::string>() << " "
     << j.at("tool").at("version").get<std::string>() << "  input "
     << j.at("input_hash").get<std::string>() << "\n";

  if (kind == "wafer_catalog") {
    os << "wafer catalog (" << j.at("wafers").size() << " feasible)\n";
    for (const auto& w : j.at("wafers")) {
      os << "  " << w.at("label").get<std::string>() << "  grid "
         << w.at("grid")[0].get<int>() << "x" << w.at("grid")[1].get<int>() << "  dram/die "
         << w.at("derived").at("die_dram_bytes").get<double>() / 1e9 << " GB @ "
         << w.at("derived").at("die_dram_bandwidth").get<double>() / 1e12 << " TB/s\n";
    }
    return os.str();
  }

  if (kind != "evaluation" && kind != "search")
    throw SpecError("report: unknown kind '" + kind + "'");

  os << "wafer " << j.at("wafer").at("label").get<std::string>() << "  model "
     << j.at("workload").at("model").at("name").get<std::string>() << "\n";
  if (kind == "search") {
    os << "verdict: " << j.at("verdict").get<std::string>() << "\n";
    const auto& c = j.at("candidates");
    os << "candidates: " << c.at("total").get<int>() << " total, "
       << c.at("evaluated").get<int>() << " evaluated, " << c.at("delegated").get<int>()
       << " delegated, " << c.at("pruned").get<int>() << " pruned, "
       << c.at("infeasible").get<int>() << " infeasible\n";
    if (!j.at("feasible").get<bool>()) return os.str();
  }

  const json& strat = kind == "search" ? j.at("best") : j.at("strategy");
  const json& metrics = j.at("metrics");
  os << "tp=" << strat.at("tp").get<int>() << " pp=" << strat.at("pp").get<int>()
     << " region=" << strat.at("region")[0].get<int>() << "x"
     << strat.at("region")[1].get<int>() << "\n";
  os << "iteration " << fmt(metrics.at("iteration_time").get<double>()) << " s, "
     << "throughput " << fmt(metrics.at("throughput").get<double>()) << " FLOP/s, "
     << "t_max " << fmt(metrics.at("t_max").get<double>()) << " s\n";
  os << "utilization: compute " << fmt(metrics.at("compute_utilization").get<double>())
     << ", dram " << fmt(metrics.at("dram_bw_utilization").get<double>()) << ", links "
     << fmt(metrics.at("link_utilization").get<double>()) << "\n";

  os << "stage  layers  fwd(s)       bwd(s)       recomp(s)    demand(B)       "
        "capacity(B)     off(B)          recv(B)\n";
  for (const auto& s : j.at("stages")) {
    char row[256];
    std::snprintf(row, sizeof(row),
                  "%-6d %-7d %-12.6g %-12.6g %-12.6g %-15lld %-15lld %-15lld %lld\n",
                  s.at("stage").get<int>(), s.at("layers").get<int>(),
                  s.at("fwd").get<double>(), s.at("bwd").get<double>(),
                  s.at("recompute").get<double>(),
                  static_cast<long long>(s.at("demand").get<double>()),
                  static_cast<long long>(s.at("capacity").get<double>()),
                  static_cast<long long>(s.at("offloaded").get<double>()),
                  static_cast<long long>(s.at("received").get<double>()));
    os << row;
  }

  os << "placement:\n" << ascii_diagram(placement_from_json(strat.at("placement")));
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw SpecError("cannot open: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace wdse
