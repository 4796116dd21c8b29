// treechain: invariant measures, recurrence classification, Green functions,
// branching-walk verdicts, and mediant-tree chains for Markov chains on
// rooted trees.
//
// Subcommands: invariant, classify, green, gw, sb, oracle, selftest.
// Exit status: 0 success, 1 domain error, 2 usage error.  Failures emit a
// machine-readable JSON error object on stderr and write no output artifact.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "treechain/classify.hpp"
#include "treechain/contfrac.hpp"
#include "treechain/gw.hpp"
#include "treechain/invariant.hpp"
#include "treechain/io.hpp"
#include "treechain/kernel.hpp"
#include "treechain/oracle.hpp"
#include "treechain/rational.hpp"
#include "treechain/selftest.hpp"
#include "treechain/sternbrocot.hpp"
#include "treechain/tree.hpp"

namespace tc = treechain;
using tc::json;

namespace {

// ---------------------------------------------------------------------------
// Small parsers shared by the subcommands.

// "0:1/2,2:1/2" -> {0: "1/2", 2: "1/2"}.
std::map<std::size_t, std::string> parse_indexed_pairs(const std::string& text,
                                                       const std::string& what) {
  std::map<std::size_t, std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t comma = text.find(',', pos);
    std::string item = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    const std::size_t colon = item.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= item.size())
      throw tc::UsageError("bad_pairs", what + " expects comma-separated k:value pairs, got '" +
                                            text + "'");
    out[tc::parse_size(item.substr(0, colon), what + " index")] = item.substr(colon + 1);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw tc::UsageError("bad_pairs", what + " must not be empty");
  return out;
}

// "r=1/4,l=1/4,p=1/2" -> options map (same grammar as shorthand options).
std::map<std::string, std::string> parse_keyed_pairs(const std::string& text,
                                                     const std::string& what) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t comma = text.find(',', pos);
    std::string item = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw tc::UsageError("bad_pairs", what + " expects comma-separated key=value pairs, got '" +
                                            text + "'");
    out[item.substr(0, eq)] = item.substr(eq + 1);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// Per-degree table lookup: the entry with the largest index <= k, else the
// first entry.  A plain value (no ':') or the wildcard "k:value" is a
// constant table.
template <typename S>
std::function<S(std::size_t)> parse_degree_function(std::string text,
                                                    const std::string& what) {
  if (text.rfind("k:", 0) == 0 && text.find(',') == std::string::npos)
    text = text.substr(2);
  if (text.find(':') == std::string::npos) {
    const S value = tc::scalar_from_string<S>(text);
    return [value](std::size_t) { return value; };
  }
  auto pairs = parse_indexed_pairs(text, what);
  std::map<std::size_t, S> table;
  for (const auto& [k, v] : pairs) table[k] = tc::scalar_from_string<S>(v);
  return [table](std::size_t k) {
    auto it = table.upper_bound(k);
    if (it != table.begin()) --it;
    return it->second;
  };
}

json verdict_to_json(const tc::Verdict& v) {
  json evidence = json::array();
  for (const auto& [idx, value] : v.evidence) evidence.push_back(json::array({idx, value}));
  return json{{"outcome", tc::outcome_name(v.outcome)},
              {"reason", v.reason},
              {"heuristic", v.heuristic},
              {"certification_depth", v.certification_depth},
              {"evidence", std::move(evidence)}};
}

// ---------------------------------------------------------------------------
// invariant: measure values over the nodes up to --depth.

struct InvariantArgs {
  std::string method = "auto";
};

template <typename S>
void run_invariant(const tc::RunConfig& cfg, const InvariantArgs& args) {
  tc::TreePtr tree = tc::load_tree(cfg.tree_spec);
  tc::KernelPtr<S> kernel = tc::load_kernel<S>(cfg.kernel_spec, tree);
  auto finite = std::dynamic_pointer_cast<const tc::FiniteTree>(tree);

  std::string method = args.method;
  if (method == "auto") method = finite ? "rw" : "det";
  if (method == "rw" && !finite)
    throw tc::UsageError("bad_method", "--method rw needs a finite tree (dense solve)");

  // The node list: the whole finite tree filtered by depth, or a truncation.
  std::vector<tc::NodeWord> nodes;
  if (finite) {
    for (const tc::NodeWord& u : finite->nodes())
      if (u.depth() <= cfg.depth) nodes.push_back(u);
  } else {
    nodes = tc::truncate(tree, cfg.depth).nodes;
  }

  bool normalized = false;
  std::map<tc::NodeWord, S> values;
  if (method == "rw") {
    auto chain = tc::densify(*kernel);
    auto pi = tc::stationary_dense(chain, cfg.tol);
    for (std::size_t i = 0; i < chain.nodes.size(); ++i) values[chain.nodes[i]] = pi[i];
    normalized = true;
  } else if (method == "leaf") {
    auto mu = tc::h_invariant_leaf_addition(*kernel, nodes);
    for (const tc::NodeWord& u : nodes) values[u] = mu.at(u);
  } else if (method == "det") {
    for (const tc::NodeWord& u : nodes)
      values[u] = tc::h_invariant_det(*kernel, u, tc::scalar_traits<S>::one());
  } else {
    throw tc::UsageError("bad_method", "unknown method '" + method + "'");
  }

  if (cfg.format == "csv") {
    tc::CsvTable table;
    if constexpr (tc::scalar_traits<S>::is_exact) {
      table.header = {"node", "depth", "value_num", "value_den"};
      for (const tc::NodeWord& u : nodes)
        table.rows.push_back({u.to_string(), std::to_string(u.depth()),
                              numerator(values[u]).str(), denominator(values[u]).str()});
    } else {
      table.header = {"node", "depth", "value"};
      for (const tc::NodeWord& u : nodes)
        table.rows.push_back(
            {u.to_string(), std::to_string(u.depth()), tc::scalar_to_text(values[u])});
    }
    tc::write_output(cfg, tc::render_csv(cfg, table));
  } else {
    json measure = json::array();
    for (const tc::NodeWord& u : nodes)
      measure.push_back(json{{"node", u.to_string()},
                             {"depth", u.depth()},
                             {"value", tc::scalar_to_json(values[u])}});
    json result{{"method", method}, {"normalized", normalized}, {"measure", std::move(measure)}};
    tc::write_output(cfg, tc::render_json_artifact(cfg, std::move(result)));
  }
}

// ---------------------------------------------------------------------------
// classify: recurrence + positive recurrence, directly or end by end.

struct ClassifyArgs {
  bool by_ends = false;
  std::size_t h_max = 64;
};

template <typename S>
void run_classify(const tc::RunConfig& cfg, const ClassifyArgs& args) {
  tc::TreePtr tree = tc::load_tree(cfg.tree_spec);
  tc::KernelPtr<S> kernel = tc::load_kernel<S>(cfg.kernel_spec, tree);
  tc::ClassifyOptions opts;
  opts.h_max = args.h_max;
  opts.depth = cfg.depth;
  opts.eps = cfg.tol;

  json result;
  if (args.by_ends) {
    auto v = tc::classify_by_ends(kernel, tree->declared_ends(), opts);
    result["recurrence"] = verdict_to_json(v.recurrence);
    result["positive"] = verdict_to_json(v.positive);
    json per_end = json::array();
    for (const auto& e : v.per_end)
      per_end.push_back(json{{"end", e.label},
                             {"recurrence", verdict_to_json(e.recurrence)},
                             {"positive", verdict_to_json(e.positive)}});
    result["per_end"] = std::move(per_end);
  } else {
    result["recurrence"] = verdict_to_json(tc::classify_recurrence(*kernel, opts));
    result["positive"] = verdict_to_json(tc::classify_positive_recurrence(*kernel, opts));
  }

  if (cfg.format == "csv") {
    tc::CsvTable table;
    table.header = {"aspect", "end", "outcome", "reason"};
    auto add = [&table](const std::string& aspect, const std::string& end, const json& v) {
      table.rows.push_back(
          {aspect, end, v["outcome"].get<std::string>(), v["reason"].get<std::string>()});
    };
    add("recurrence", "", result["recurrence"]);
    add("positive", "", result["positive"]);
    if (result.contains("per_end")) {
      for (const auto& e : result["per_end"]) {
        add("recurrence", e["end"].get<std::string>(), e["recurrence"]);
        add("positive", e["end"].get<std::string>(), e["positive"]);
      }
    }
    tc::write_output(cfg, tc::render_csv(cfg, table));
  } else {
    tc::write_output(cfg, tc::render_json_artifact(cfg, std::move(result)));
  }
}

// ---------------------------------------------------------------------------
// green: excursion generating function value at x, or its series coefficients.

struct GreenArgs {
  std::string node = "root";
  std::string x = "1/2";
  std::size_t series = 0;  // 0 = value mode; else coefficient count
};

template <typename S>
void run_green(const tc::RunConfig& cfg, const GreenArgs& args) {
  tc::TreePtr tree = tc::load_tree(cfg.tree_spec);
  tc::KernelPtr<S> kernel = tc::load_kernel<S>(cfg.kernel_spec, tree);
  const tc::NodeWord node = tc::NodeWord::parse(args.node);

  if (args.series > 0) {
    auto finite = std::dynamic_pointer_cast<const tc::FiniteTree>(tree);
    if (!finite)
      throw tc::UsageError("bad_method", "--series needs a finite tree (exact path enumeration)");
    auto chain = tc::densify(*kernel);
    tc::PathQuery q;
    q.start = node;
    q.end = node;
    q.first_hit = false;
    q.max_length = args.series;
    auto poly = tc::path_polynomial(chain, q);
    if (cfg.format == "csv") {
      tc::CsvTable table;
      table.header = {"length", "coefficient"};
      for (std::size_t k = 0; k < poly.size(); ++k)
        table.rows.push_back({std::to_string(k), tc::scalar_to_text(poly[k])});
      tc::write_output(cfg, tc::render_csv(cfg, table));
    } else {
      json coeffs = json::array();
      for (const S& c : poly) coeffs.push_back(tc::scalar_to_json(c));
      json result{{"node", node.to_string()}, {"coefficients", std::move(coeffs)}};
      tc::write_output(cfg, tc::render_json_artifact(cfg, std::move(result)));
    }
    return;
  }

  const S x = tc::scalar_from_string<S>(args.x);
  tc::GreenOptions opts;
  opts.depth = cfg.depth;
  opts.tol = cfg.tol;
  auto g = tc::green_aud(*kernel, node, x, opts);
  if (cfg.format == "csv") {
    tc::CsvTable table;
    table.header = {"node", "x", "value", "converged", "delta"};
    table.rows.push_back({node.to_string(), args.x, tc::scalar_to_text(g.value),
                          g.converged ? "1" : "0", tc::to_string(g.delta)});
    tc::write_output(cfg, tc::render_csv(cfg, table));
  } else {
    json result{{"node", node.to_string()},
                {"x", args.x},
                {"value", tc::scalar_to_json(g.value)},
                {"converged", g.converged},
                {"delta", g.delta}};
    tc::write_output(cfg, tc::render_json_artifact(cfg, std::move(result)));
  }
}

// ---------------------------------------------------------------------------
// gw: critical branching walk classifier / spine log-mass simulation.

struct GwArgs {
  std::string law;
  std::string f;
  std::string g;
  std::size_t simulate = 0;  // number of sampled spines; 0 = classify only
  std::size_t spine = 200;
};

template <typename S>
void run_gw(const tc::RunConfig& cfg, const GwArgs& args) {
  auto law_pairs = parse_indexed_pairs(args.law, "--law");
  std::vector<S> probs(law_pairs.rbegin()->first + 1, tc::scalar_traits<S>::zero());
  for (const auto& [k, v] : law_pairs) probs[k] = tc::scalar_from_string<S>(v);
  tc::OffspringLaw<S> law(probs);
  tc::HomogeneousWalkParams<S> params{parse_degree_function<S>(args.f, "--F"),
                                      parse_degree_function<S>(args.g, "--G")};

  if (args.simulate > 0) {
    // Mean spine log-mass by depth across sampled spines.
    std::vector<double> mean(args.spine + 1, 0.0);
    for (std::size_t s = 0; s < args.simulate; ++s) {
      auto degs = tc::sample_spine_degrees(law, args.spine, tc::derive_seed(cfg.seed, s));
      double logpi = 0.0;
      for (std::size_t j = 1; j <= args.spine; ++j) {
        logpi += std::log(tc::scalar_traits<S>::to_double(params.G(degs[j - 1]))) -
                 std::log(tc::scalar_traits<S>::to_double(params.F(degs[j])));
        mean[j] += logpi;
      }
    }
    for (double& m : mean) m /= static_cast<double>(args.simulate);
    if (cfg.format == "json") {
      json rows = json::array();
      for (std::size_t j = 0; j < mean.size(); ++j)
        rows.push_back(json::array({j, mean[j]}));
      json result{{"samples", args.simulate}, {"spine", args.spine}, {"mean_log_mass", rows}};
      tc::write_output(cfg, tc::render_json_artifact(cfg, std::move(result)));
    } else {
      tc::CsvTable table;
      table.header = {"depth", "mean_log_mass"};
      for (std::size_t j = 0; j < mean.size(); ++j)
        table.rows.push_back({std::to_string(j), tc::to_string(mean[j])});
      tc::write_output(cfg, tc::render_csv(cfg, table));
    }
    return;
  }

  auto cls = tc::gw_classifier(law, params);
  if (cfg.format == "json") {
    json result{{"f", tc::scalar_to_json(cls.f)},
                {"mean_inverse_f", tc::scalar_to_json(cls.mean_inverse_f)},
                {"m", tc::scalar_to_json(cls.m)},
                {"log_drift", cls.log_drift},
                {"verdict", tc::outcome_name(cls.outcome)},
                {"reason", cls.reason}};
    tc::write_output(cfg, tc::render_json_artifact(cfg, std::move(result)));
  } else {
    tc::CsvTable table;
    table.header = {"f", "m", "log_drift", "verdict"};
    table.rows.push_back({tc::scalar_to_text(cls.f), tc::scalar_to_text(cls.m),
                          tc::to_string(cls.log_drift), tc::outcome_name(cls.outcome)});
    tc::write_output(cfg, tc::render_csv(cfg, table));
  }
}

// ---------------------------------------------------------------------------
// sb: mediant-tree chain simulation (occupancy or trajectory head).

struct SbArgs {
  std::string family = "r=1/4,l=1/4,p=1/2";
  std::string start = "1/1";
  std::uint64_t steps = 10000;
  bool trajectory = false;
  std::size_t head = 32;
};

void run_sb(const tc::RunConfig& cfg, const SbArgs& args) {
  auto opts = parse_keyed_pairs(args.family, "--family");
  auto get = [&opts](const char* key) {
    auto it = opts.find(key);
    return it == opts.end() ? 0.0 : tc::scalar_from_string<double>(it->second);
  };
  tc::TransitionFamily fam = tc::constant_family(get("r"), get("l"), get("p"));
  const tc::BigRational start = tc::rational_from_string(args.start);
  auto rep = tc::sb_simulate(fam, start, args.steps, cfg.seed, 4096,
                             args.trajectory ? args.head : 0);

  if (cfg.format == "json") {
    json occupancy = json::object();
    for (const auto& [state, count] : rep.occupancy)
      occupancy[tc::rational_to_string(state)] = count;
    json head = json::array();
    for (const auto& q : rep.trajectory_head) head.push_back(tc::rational_to_string(q));
    json result{{"steps", rep.steps},
                {"returns_to_root", rep.returns_to_root},
                {"final_state", tc::rational_to_string(rep.final_state)},
                {"mean_word_depth", rep.mean_word_depth},
                {"skipped_states", rep.skipped_states},
                {"occupancy", std::move(occupancy)},
                {"trajectory_head", std::move(head)}};
    tc::write_output(cfg, tc::render_json_artifact(cfg, std::move(result)));
  } else if (args.trajectory) {
    tc::CsvTable table;
    table.header = {"step", "state"};
    for (std::size_t i = 0; i < rep.trajectory_head.size(); ++i)
      table.rows.push_back({std::to_string(i), tc::rational_to_string(rep.trajectory_head[i])});
    tc::write_output(cfg, tc::render_csv(cfg, table));
  } else {
    tc::CsvTable table;
    table.header = {"state", "visits"};
    for (const auto& [state, count] : rep.occupancy)
      table.rows.push_back({tc::rational_to_string(state), std::to_string(count)});
    tc::write_output(cfg, tc::render_csv(cfg, table));
  }
}

// ---------------------------------------------------------------------------
// oracle: brute-force reference computations on finite trees.

struct OracleArgs {
  std::string mode = "stationary";  // stationary | path
  std::string start = "root";
  std::string end = "root";
  std::string x = "1";
  bool resolvent = false;  // path mode: all visits instead of first hit
  bool polynomial = false;
  std::string forbid;
  std::size_t max_length = 16;
};

template <typename S>
void run_oracle(const tc::RunConfig& cfg, const OracleArgs& args) {
  tc::TreePtr tree = tc::load_tree(cfg.tree_spec);
  tc::KernelPtr<S> kernel = tc::load_kernel<S>(cfg.kernel_spec, tree);
  auto chain = tc::densify(*kernel);

  if (args.mode == "stationary") {
    auto pi = tc::stationary_dense(chain, cfg.tol);
    if (cfg.format == "csv") {
      tc::CsvTable table;
      table.header = {"node", "value"};
      for (std::size_t i = 0; i < chain.nodes.size(); ++i)
        table.rows.push_back({chain.nodes[i].to_string(), tc::scalar_to_text(pi[i])});
      tc::write_output(cfg, tc::render_csv(cfg, table));
    } else {
      json measure = json::array();
      for (std::size_t i = 0; i < chain.nodes.size(); ++i)
        measure.push_back(json{{"node", chain.nodes[i].to_string()},
                               {"value", tc::scalar_to_json(pi[i])}});
      tc::write_output(cfg, tc::render_json_artifact(cfg, json{{"measure", std::move(measure)}}));
    }
    return;
  }
  if (args.mode != "path")
    throw tc::UsageError("bad_method", "oracle mode must be 'stationary' or 'path'");

  tc::PathQuery q;
  q.start = tc::NodeWord::parse(args.start);
  q.end = tc::NodeWord::parse(args.end);
  q.first_hit = !args.resolvent;
  q.max_length = args.max_length;
  if (!args.forbid.empty())
    for (const std::string& w : tc::split_list(args.forbid))
      q.forbidden.push_back(tc::NodeWord::parse(w));

  if (args.polynomial) {
    auto poly = tc::path_polynomial(chain, q);
    if (cfg.format == "csv") {
      tc::CsvTable table;
      table.header = {"length", "coefficient"};
      for (std::size_t k = 0; k < poly.size(); ++k)
        table.rows.push_back({std::to_string(k), tc::scalar_to_text(poly[k])});
      tc::write_output(cfg, tc::render_csv(cfg, table));
    } else {
      json coeffs = json::array();
      for (const S& c : poly) coeffs.push_back(tc::scalar_to_json(c));
      tc::write_output(cfg,
                       tc::render_json_artifact(cfg, json{{"coefficients", std::move(coeffs)}}));
    }
    return;
  }

  const S x = tc::scalar_from_string<S>(args.x);
  const S value = tc::path_value(chain, q, x);
  json result{{"start", q.start.to_string()},
              {"end", q.end.to_string()},
              {"first_hit", q.first_hit},
              {"x", args.x},
              {"value", tc::scalar_to_json(value)}};
  if (cfg.format == "csv") {
    tc::CsvTable table;
    table.header = {"start", "end", "first_hit", "x", "value"};
    table.rows.push_back({q.start.to_string(), q.end.to_string(), q.first_hit ? "1" : "0",
                          args.x, tc::scalar_to_text(value)});
    tc::write_output(cfg, tc::render_csv(cfg, table));
  } else {
    tc::write_output(cfg, tc::render_json_artifact(cfg, std::move(result)));
  }
}

// ---------------------------------------------------------------------------
// Option plumbing.

struct CommonFlags {
  bool float_mode = false;
  bool no_timestamp = false;
};

void add_common_options(CLI::App* sub, tc::RunConfig& cfg, CommonFlags& flags,
                        bool with_tree_kernel) {
  if (with_tree_kernel) {
    sub->add_option("--tree", cfg.tree_spec,
                    "Tree: line | zline | rays:count=K | complete:arity=D[,depth=H] | JSON file")
        ->required();
    sub->add_option("--kernel", cfg.kernel_spec,
                    "Kernel: simple | uniform | geometric:p= | leafjump:p= | "
                    "homogeneous:up=,child= | bd:down=[,up=,stay=] | ray:away=a|b[,root=...] | "
                    "JSON file")
        ->required();
  }
  auto* exact = sub->add_flag("--exact", "Exact rational arithmetic (default)");
  sub->add_flag("--float", flags.float_mode, "Binary64 arithmetic")->excludes(exact);
  sub->add_option("--depth", cfg.depth, "Depth / truncation level")->capture_default_str();
  sub->add_option("--tol", cfg.tol, "Numeric tolerance (float mode checks)")->capture_default_str();
  sub->add_option("--seed", cfg.seed, "Random seed for sampling subcommands")->capture_default_str();
  sub->add_option("--jobs", cfg.jobs, "Reserved; output is independent of job count")->capture_default_str();
  sub->add_option("--format,--out", cfg.format, "Output format: json | csv")
      ->check(CLI::IsMember({"json", "csv"}));
  sub->add_option("--output", cfg.output_path, "Output file (default stdout)");
  sub->add_flag("--no-timestamp", flags.no_timestamp,
                "Omit the timestamp for byte-identical reruns");
}

void finalize_config(tc::RunConfig& cfg, const CommonFlags& flags, const std::string& sub) {
  cfg.subcommand = sub;
  cfg.exact = !flags.float_mode;
  cfg.timestamp = !flags.no_timestamp;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Markov chains on rooted trees: invariant measures, recurrence classification,\n"
               "Green functions, critical branching walks, and the mediant (Stern-Brocot) chain."};
  app.require_subcommand(1);

  tc::RunConfig cfg;
  CommonFlags flags;

  InvariantArgs inv_args;
  auto* inv = app.add_subcommand("invariant", "Invariant measure over nodes up to --depth");
  add_common_options(inv, cfg, flags, true);
  inv->add_option("--method", inv_args.method,
                  "det (branch determinants) | leaf (leaf addition) | rw (dense solve, "
                  "normalized) | auto")->capture_default_str()
      ->check(CLI::IsMember({"auto", "det", "leaf", "rw"}));

  ClassifyArgs cls_args;
  auto* cls = app.add_subcommand("classify", "Recurrence and positive-recurrence verdicts");
  add_common_options(cls, cfg, flags, true);
  cls->add_flag("--by-ends", cls_args.by_ends, "Classify each declared end, then combine");
  cls->add_option("--h-max", cls_args.h_max, "Deepest level probed by the return curve")->capture_default_str();

  GreenArgs green_args;
  auto* grn = app.add_subcommand("green", "Excursion generating function (Green value)");
  add_common_options(grn, cfg, flags, true);
  grn->add_option("--node", green_args.node, "Base node word (1-based, e.g. 1.2)")->capture_default_str();
  grn->add_option("--x", green_args.x, "Step-counting variable")->capture_default_str();
  grn->add_option("--series", green_args.series,
                  "Emit series coefficients up to this length instead of a value");

  GwArgs gw_args;
  auto* gw = app.add_subcommand("gw", "Critical branching walk classifier / spine sampler");
  add_common_options(gw, cfg, flags, false);
  gw->add_option("--law", gw_args.law, "Offspring law, e.g. 0:1/2,2:1/2 (critical: mean 1)")
      ->required();
  gw->add_option("--F", gw_args.f, "Upward weight by degree: constant or k:value pairs")
      ->required();
  gw->add_option("--G", gw_args.g, "Per-child weight by degree: constant or k:value pairs")
      ->required();
  gw->add_option("--simulate", gw_args.simulate, "Sample this many spines (0 = classify)");
  gw->add_option("--spine", gw_args.spine, "Spine length for --simulate")->capture_default_str();

  SbArgs sb_args;
  auto* sb = app.add_subcommand("sb", "Mediant-tree (Stern-Brocot) chain simulation");
  add_common_options(sb, cfg, flags, false);
  sb->add_option("--family", sb_args.family, "Move probabilities r=,l=,p= (stay = rest)")->capture_default_str();
  sb->add_option("--start", sb_args.start, "Start state as a positive rational")->capture_default_str();
  sb->add_option("--steps", sb_args.steps, "Number of steps")->capture_default_str();
  sb->add_flag("--trajectory", sb_args.trajectory, "Emit the trajectory head instead of occupancy");
  sb->add_option("--head", sb_args.head, "Trajectory head length")->capture_default_str();

  OracleArgs orc_args;
  auto* orc = app.add_subcommand("oracle", "Brute-force reference values (finite trees)");
  add_common_options(orc, cfg, flags, true);
  orc->add_option("--mode", orc_args.mode, "stationary | path")->capture_default_str()
      ->check(CLI::IsMember({"stationary", "path"}));
  orc->add_option("--path-start", orc_args.start, "Path start node")->capture_default_str();
  orc->add_option("--path-end", orc_args.end, "Path end node")->capture_default_str();
  orc->add_option("--x", orc_args.x, "Step-counting variable for path values")->capture_default_str();
  orc->add_flag("--resolvent", orc_args.resolvent, "Count all visits instead of first hits");
  orc->add_flag("--polynomial", orc_args.polynomial, "Emit per-length path weights");
  orc->add_option("--forbid", orc_args.forbid, "Forbidden nodes, '|'-separated");
  orc->add_option("--max-length", orc_args.max_length, "Length cap for --polynomial")->capture_default_str();

  auto* self = app.add_subcommand("selftest", "Run the full acceptance suite");
  (void)self;

  // Subcommand-appropriate default formats (explicit --format overrides).
  cfg.format = "";

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << tc::render_error(tc::UsageError("bad_arguments", e.what()), "");
    return 2;
  }

  const std::string sub_name = app.get_subcommands().front()->get_name();
  finalize_config(cfg, flags, sub_name);
  if (cfg.format.empty()) {
    static const std::map<std::string, std::string> defaults{
        {"invariant", "csv"}, {"classify", "json"}, {"green", "json"},
        {"gw", "csv"},        {"sb", "csv"},        {"oracle", "json"}};
    auto it = defaults.find(sub_name);
    cfg.format = it == defaults.end() ? "json" : it->second;
  }

  try {
    if (app.got_subcommand(self)) {
      return tc::print_acceptance(std::cout) == 0 ? 0 : 1;
    }
    if (app.got_subcommand(inv)) {
      cfg.extras.push_back({"method", inv_args.method});
      if (cfg.exact) run_invariant<tc::BigRational>(cfg, inv_args);
      else run_invariant<double>(cfg, inv_args);
    } else if (app.got_subcommand(cls)) {
      cfg.extras.push_back({"by_ends", cls_args.by_ends ? "1" : "0"});
      cfg.extras.push_back({"h_max", std::to_string(cls_args.h_max)});
      if (cfg.exact) run_classify<tc::BigRational>(cfg, cls_args);
      else run_classify<double>(cfg, cls_args);
    } else if (app.got_subcommand(grn)) {
      cfg.extras.push_back({"node", green_args.node});
      cfg.extras.push_back({"x", green_args.x});
      if (green_args.series) cfg.extras.push_back({"series", std::to_string(green_args.series)});
      if (cfg.exact) run_green<tc::BigRational>(cfg, green_args);
      else run_green<double>(cfg, green_args);
    } else if (app.got_subcommand(gw)) {
      cfg.extras.push_back({"law", gw_args.law});
      cfg.extras.push_back({"F", gw_args.f});
      cfg.extras.push_back({"G", gw_args.g});
      if (gw_args.simulate) {
        cfg.extras.push_back({"simulate", std::to_string(gw_args.simulate)});
        cfg.extras.push_back({"spine", std::to_string(gw_args.spine)});
      }
      if (cfg.exact) run_gw<tc::BigRational>(cfg, gw_args);
      else run_gw<double>(cfg, gw_args);
    } else if (app.got_subcommand(sb)) {
      cfg.extras.push_back({"family", sb_args.family});
      cfg.extras.push_back({"start", sb_args.start});
      cfg.extras.push_back({"steps", std::to_string(sb_args.steps)});
      run_sb(cfg, sb_args);
    } else if (app.got_subcommand(orc)) {
      cfg.extras.push_back({"mode", orc_args.mode});
      if (orc_args.mode == "path") {
        cfg.extras.push_back({"path_start", orc_args.start});
        cfg.extras.push_back({"path_end", orc_args.end});
        cfg.extras.push_back({"x", orc_args.x});
      }
      if (cfg.exact) run_oracle<tc::BigRational>(cfg, orc_args);
      else run_oracle<double>(cfg, orc_args);
    }
    return 0;
  } catch (const tc::UsageError& e) {
    std::cerr << tc::render_error(e, sub_name);
    return 2;
  } catch (const tc::DomainError& e) {
    std::cerr << tc::render_error(e, sub_name);
    return 1;
  } catch (const tc::TreechainError& e) {
    std::cerr << tc::render_error(e, sub_name);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << tc::render_error(tc::DomainError("internal", e.what()), sub_name);
    return 1;
  }
}
