#pragma once

// Input/output layer shared by the command-line tool and the test suites:
// tree and kernel loading (JSON files or inline shorthand strings), rational
// round-trip serialization as "num/den", run-configuration canonicalization
// and hashing, and JSON/CSV artifact envelopes that embed the library version
// and the configuration hash so every result is traceable to its run.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "treechain/errors.hpp"
#include "treechain/kernel.hpp"
#include "treechain/node_word.hpp"
#include "treechain/rational.hpp"
#include "treechain/tree.hpp"
#include "treechain/version.hpp"

namespace treechain {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Rational round-trip: rationals always serialize as "num/den".

inline std::string rational_to_string(const BigRational& q) {
  std::ostringstream os;
  os << numerator(q) << "/" << denominator(q);
  return os.str();
}

inline BigRational rational_from_string(const std::string& text) {
  const std::size_t slash = text.find('/');
  try {
    if (slash == std::string::npos) return BigRational(BigInt(text));
    BigInt num(text.substr(0, slash));
    BigInt den(text.substr(slash + 1));
    if (den == 0) throw UsageError("bad_rational", "zero denominator in '" + text + "'");
    return BigRational(num, den);
  } catch (const TreechainError&) {
    throw;
  } catch (const std::exception&) {
    throw UsageError("bad_rational", "cannot parse rational '" + text + "'");
  }
}

// Parses a scalar from text: exact scalars take "num/den" or integers; floats
// additionally accept decimal/scientific literals.
template <typename S>
S scalar_from_string(const std::string& text) {
  if constexpr (scalar_traits<S>::is_exact) {
    return S(rational_from_string(text));
  } else {
    if (text.find('/') != std::string::npos)
      return scalar_traits<BigRational>::to_double(rational_from_string(text));
    try {
      std::size_t used = 0;
      double v = std::stod(text, &used);
      if (used != text.size()) throw UsageError("bad_number", "trailing junk in '" + text + "'");
      return v;
    } catch (const TreechainError&) {
      throw;
    } catch (const std::exception&) {
      throw UsageError("bad_number", "cannot parse number '" + text + "'");
    }
  }
}

// Scalar -> JSON value: exact scalars as "num/den" strings, floats as numbers.
template <typename S>
json scalar_to_json(const S& v) {
  if constexpr (scalar_traits<S>::is_exact) {
    return json(rational_to_string(v));
  } else {
    return json(v);
  }
}

template <typename S>
std::string scalar_to_text(const S& v) {
  if constexpr (scalar_traits<S>::is_exact) {
    return rational_to_string(v);
  } else {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  }
}

// ---------------------------------------------------------------------------
// Shorthand parsing: "name:key=value,key=value".  List-valued options use
// '|' as the element separator (the comma already separates options).

struct ShorthandSpec {
  std::string name;
  std::map<std::string, std::string> options;

  bool has(const std::string& key) const { return options.count(key) > 0; }

  const std::string& get(const std::string& key) const {
    auto it = options.find(key);
    if (it == options.end())
      throw UsageError("missing_option", "shorthand '" + name + "' needs option '" + key + "'");
    return it->second;
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    auto it = options.find(key);
    return it == options.end() ? fallback : it->second;
  }
};

inline ShorthandSpec parse_shorthand(const std::string& text) {
  ShorthandSpec spec;
  const std::size_t colon = text.find(':');
  spec.name = text.substr(0, colon);
  if (colon == std::string::npos) return spec;
  std::string rest = text.substr(colon + 1);
  std::size_t pos = 0;
  while (pos < rest.size()) {
    std::size_t comma = rest.find(',', pos);
    std::string item = rest.substr(pos, comma == std::string::npos ? comma : comma - pos);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError("bad_shorthand", "expected key=value in '" + text + "'");
    spec.options[item.substr(0, eq)] = item.substr(eq + 1);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return spec;
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t bar = text.find('|', pos);
    out.push_back(text.substr(pos, bar == std::string::npos ? bar : bar - pos));
    if (bar == std::string::npos) break;
    pos = bar + 1;
  }
  return out;
}

inline std::size_t parse_size(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw UsageError("bad_number", "cannot parse " + what + " '" + text + "'");
  }
}

// ---------------------------------------------------------------------------
// File helpers.

inline bool file_exists(const std::string& path) {
  std::ifstream in(path);
  return in.good();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("missing_input", "cannot open file '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline json parse_json_file(const std::string& path) {
  const std::string text = read_file(path);
  json parsed = json::parse(text, nullptr, false);
  if (parsed.is_discarded())
    throw UsageError("bad_json", "file '" + path + "' is not valid JSON");
  return parsed;
}

// ---------------------------------------------------------------------------
// Tree loading.
//
// Inline shorthands:
//   line                       half-line (one ray from the root)
//   zline                      two rays P+ / P- from the root
//   rays:count=K               K rays from the root
//   complete:arity=D           infinite complete D-ary tree
//   complete:arity=D,depth=H   finite complete D-ary tree of the given depth
// Anything else is a path to a JSON file describing a finite tree:
//   {"nodes": ["root", "1", "2", "1.1", ...]}     node words, or
//   {"children": [3, 2, 0, 0, 0, 0]}              BFS child counts.

inline std::shared_ptr<const FiniteTree> finite_complete_tree(std::size_t arity,
                                                              std::size_t depth) {
  if (arity == 0) throw UsageError("bad_tree_spec", "complete tree arity must be >= 1");
  std::vector<std::size_t> counts;
  std::size_t level_size = 1;
  for (std::size_t d = 0; d <= depth; ++d) {
    for (std::size_t i = 0; i < level_size; ++i) counts.push_back(d < depth ? arity : 0);
    if (d < depth) level_size *= arity;
  }
  return FiniteTree::make(counts);
}

inline std::shared_ptr<const FiniteTree> tree_from_json(const json& doc) {
  if (doc.contains("children")) {
    if (!doc["children"].is_array())
      throw UsageError("bad_tree", "'children' must be an array of counts");
    std::vector<std::size_t> counts;
    for (const auto& c : doc["children"]) {
      if (!c.is_number_unsigned()) throw UsageError("bad_tree", "child counts must be >= 0");
      counts.push_back(c.get<std::size_t>());
    }
    return FiniteTree::make(counts);
  }
  if (doc.contains("nodes")) {
    if (!doc["nodes"].is_array()) throw UsageError("bad_tree", "'nodes' must be an array");
    // Sort into breadth-first order, then children of each node must be
    // numbered 1..k with their parent present.
    std::map<NodeWord, std::size_t> count;
    for (const auto& item : doc["nodes"]) {
      if (!item.is_string()) throw UsageError("bad_tree", "node words must be strings");
      NodeWord w = NodeWord::parse(item.get<std::string>());
      if (count.count(w)) throw UsageError("bad_tree", "duplicate node '" + w.to_string() + "'");
      count[w] = 0;
    }
    if (!count.count(NodeWord::root()))
      throw UsageError("bad_tree", "node list must include the root");
    for (const auto& [w, c] : count) {
      (void)c;
      if (w.is_root()) continue;
      auto parent = count.find(w.parent());
      if (parent == count.end())
        throw UsageError("bad_tree", "node '" + w.to_string() + "' has no parent in the list");
      ++parent->second;
    }
    std::vector<std::size_t> counts;
    for (const auto& [w, c] : count) {
      // Children must be a contiguous 1..k block for the BFS reconstruction.
      for (std::size_t k = 0; k < c; ++k)
        if (!count.count(w.child(static_cast<Letter>(k))))
          throw UsageError("bad_tree", "children of '" + w.to_string() + "' must be numbered 1..k");
      counts.push_back(c);
    }
    return FiniteTree::make(counts);
  }
  throw UsageError("bad_tree", "tree JSON needs a 'nodes' or 'children' field");
}

inline TreePtr load_tree(const std::string& spec) {
  ShorthandSpec sh = parse_shorthand(spec);
  if (sh.name == "line") return make_line();
  if (sh.name == "zline") return make_zline();
  if (sh.name == "rays")
    return std::make_shared<const RaysTree>(parse_size(sh.get("count"), "ray count"));
  if (sh.name == "complete") {
    const std::size_t arity = parse_size(sh.get("arity"), "arity");
    if (sh.has("depth")) return finite_complete_tree(arity, parse_size(sh.get("depth"), "depth"));
    if (arity == 0) throw UsageError("bad_tree_spec", "complete tree arity must be >= 1");
    return std::make_shared<const CompleteTree>(arity);
  }
  if (file_exists(spec)) return tree_from_json(parse_json_file(spec));
  throw UsageError("missing_input", "tree spec '" + spec + "' is neither a shorthand nor a file");
}

// ---------------------------------------------------------------------------
// Kernel loading.
//
// Inline shorthands (values are rationals like 2/3; floats also accepted in
// float mode):
//   simple                               uniform step to parent + children
//   uniform                              uniform jump into the subtree (finite trees)
//   geometric:p=1/3                      subtree-uniform jump w.p. p, else parent
//   leafjump:p=1/3                       jump to subtree leaves w.p. p, else parent
//   homogeneous:up=9/23,child=7/23       fixed upward / per-child weights
//   bd:down=2/3[,up=...][,stay=...]      birth-death chain in height language:
//                                        down = toward the root, up = away
//                                        (tree must be line)
//   ray:away=2/3|1/3[,root=2/3|1/3]      per-ray away rates (tree must be rays)
// Anything else is a path to a JSON file:
//   {"type": "explicit", "rows": [["1/20","1/4","1/5","1/2"], ...]}
// with rows indexed by the breadth-first node order of the finite tree.

template <typename S>
KernelPtr<S> kernel_from_json(const json& doc, TreePtr tree) {
  const std::string type = doc.value("type", "explicit");
  if (type != "explicit")
    throw UsageError("bad_kernel", "kernel files support type 'explicit' only, got '" + type + "'");
  auto finite = std::dynamic_pointer_cast<const FiniteTree>(tree);
  if (!finite) throw UsageError("bad_kernel", "explicit kernels need a finite tree");
  if (!doc.contains("rows") || !doc["rows"].is_array())
    throw UsageError("bad_kernel", "explicit kernel needs a 'rows' array");
  const std::size_t n = finite->nodes().size();
  if (doc["rows"].size() != n)
    throw UsageError("bad_kernel", "kernel has " + std::to_string(doc["rows"].size()) +
                                       " rows but the tree has " + std::to_string(n) + " nodes");
  Matrix<S> m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = doc["rows"][i];
    if (!row.is_array() || row.size() != n)
      throw UsageError("bad_kernel", "kernel row " + std::to_string(i) + " must have " +
                                         std::to_string(n) + " entries");
    for (std::size_t j = 0; j < n; ++j) {
      const auto& cell = row[j];
      if (cell.is_string()) {
        m.at(i, j) = scalar_from_string<S>(cell.get<std::string>());
      } else if (cell.is_number()) {
        if constexpr (scalar_traits<S>::is_exact) {
          if (!cell.is_number_integer())
            throw UsageError("bad_kernel", "exact kernels need integer or \"num/den\" entries");
          m.at(i, j) = scalar_traits<S>::from_int(cell.get<long long>());
        } else {
          m.at(i, j) = cell.get<double>();
        }
      } else {
        throw UsageError("bad_kernel", "kernel entries must be strings or numbers");
      }
    }
  }
  return std::make_shared<const ExplicitKernel<S>>(finite, std::move(m));
}

template <typename S>
KernelPtr<S> load_kernel(const std::string& spec, TreePtr tree) {
  ShorthandSpec sh = parse_shorthand(spec);
  if (sh.name == "simple") return make_simple_walk<S>(tree);
  if (sh.name == "uniform") return std::make_shared<const UniformKernel<S>>(tree);
  if (sh.name == "geometric")
    return std::make_shared<const GeometricKernel<S>>(tree, scalar_from_string<S>(sh.get("p")));
  if (sh.name == "leafjump")
    return std::make_shared<const LeafJumpKernel<S>>(tree, scalar_from_string<S>(sh.get("p")));
  if (sh.name == "homogeneous")
    return make_homogeneous_walk<S>(tree, scalar_from_string<S>(sh.get("up")),
                                    scalar_from_string<S>(sh.get("child")));
  if (sh.name == "bd") {
    // Height language: "down" steps toward the root, "up" away from it.
    const S one = scalar_traits<S>::one();
    const S zero = scalar_traits<S>::zero();
    S down = scalar_from_string<S>(sh.get("down"));
    S stay = sh.has("stay") ? scalar_from_string<S>(sh.get("stay")) : zero;
    S up = sh.has("up") ? scalar_from_string<S>(sh.get("up")) : S(one - down - stay);
    if (!sh.has("stay")) stay = one - down - up;
    return make_birth_death<S>({down}, {up}, {stay});
  }
  if (sh.name == "ray") {
    auto rays = std::dynamic_pointer_cast<const RaysTree>(tree);
    if (!rays) throw UsageError("bad_kernel", "ray walk needs a rays/zline tree");
    std::vector<S> away;
    for (const std::string& v : split_list(sh.get("away"))) away.push_back(scalar_from_string<S>(v));
    std::vector<S> root_to;
    if (sh.has("root")) {
      for (const std::string& v : split_list(sh.get("root")))
        root_to.push_back(scalar_from_string<S>(v));
    } else {
      // Default root row: split the away rates' pattern evenly.
      const S share = scalar_traits<S>::from_ratio(1, static_cast<long long>(rays->rays()));
      root_to.assign(rays->rays(), share);
    }
    return make_ray_walk<S>(rays, std::move(away), std::move(root_to));
  }
  if (file_exists(spec)) return kernel_from_json<S>(parse_json_file(spec), std::move(tree));
  throw UsageError("missing_input", "kernel spec '" + spec + "' is neither a shorthand nor a file");
}

// ---------------------------------------------------------------------------
// Run configuration: canonical string -> FNV-1a hash embedded in artifacts.
// Identical configuration and seed produce byte-identical output except for
// the timestamp field, which --no-timestamp suppresses.

struct RunConfig {
  std::string subcommand;
  std::string tree_spec;
  std::string kernel_spec;
  bool exact = true;
  std::size_t depth = 8;
  double tol = 1e-9;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  std::string format = "json";  // "json" or "csv"
  std::string output_path;      // empty = stdout
  bool timestamp = true;
  std::vector<std::pair<std::string, std::string>> extras;  // subcommand-specific

  std::string canonical() const {
    std::ostringstream os;
    os << "subcommand=" << subcommand << "|tree=" << tree_spec << "|kernel=" << kernel_spec
       << "|exact=" << (exact ? 1 : 0) << "|depth=" << depth << "|tol=" << tol
       << "|seed=" << seed << "|format=" << format;
    std::vector<std::pair<std::string, std::string>> sorted = extras;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& [k, v] : sorted) os << "|" << k << "=" << v;
    return os.str();
  }

  std::string hash() const { return config_hash(canonical()); }
};

inline std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

inline json config_to_json(const RunConfig& cfg) {
  json j;
  j["subcommand"] = cfg.subcommand;
  if (!cfg.tree_spec.empty()) j["tree"] = cfg.tree_spec;
  if (!cfg.kernel_spec.empty()) j["kernel"] = cfg.kernel_spec;
  j["exact"] = cfg.exact;
  j["depth"] = cfg.depth;
  j["tol"] = cfg.tol;
  j["seed"] = cfg.seed;
  for (const auto& [k, v] : cfg.extras) j[k] = v;
  return j;
}

// JSON artifact envelope: version + config hash + echoed config + result.
inline json make_artifact(const RunConfig& cfg, json result) {
  json j;
  j["version"] = std::string(kVersion);
  j["config_hash"] = cfg.hash();
  j["config"] = config_to_json(cfg);
  if (cfg.timestamp) j["generated_at"] = utc_timestamp();
  j["result"] = std::move(result);
  return j;
}

// CSV artifact: '#'-prefixed header lines carry the same envelope fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::string render_csv(const RunConfig& cfg, const CsvTable& table) {
  std::ostringstream os;
  os << "# version=" << kVersion << "\n";
  os << "# config_hash=" << cfg.hash() << "\n";
  if (cfg.timestamp) os << "# generated_at=" << utc_timestamp() << "\n";
  for (std::size_t i = 0; i < table.header.size(); ++i)
    os << (i ? "," : "") << table.header[i];
  os << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << "\n";
  }
  return os.str();
}

inline std::string render_json_artifact(const RunConfig& cfg, json result) {
  return make_artifact(cfg, std::move(result)).dump(2) + "\n";
}

inline void write_output(const RunConfig& cfg, const std::string& payload) {
  if (cfg.output_path.empty()) {
    std::fputs(payload.c_str(), stdout);
    return;
  }
  std::ofstream out(cfg.output_path, std::ios::binary);
  if (!out) throw UsageError("bad_output", "cannot open output file '" + cfg.output_path + "'");
  out << payload;
  if (!out) throw UsageError("bad_output", "failed writing to '" + cfg.output_path + "'");
}

// Machine-readable error payload used by the CLI on failure exits.
inline std::string render_error(const TreechainError& err, const std::string& subcommand) {
  json j;
  j["version"] = std::string(kVersion);
  j["error"] = {{"kind", err.kind()}, {"message", err.what()}, {"subcommand", subcommand}};
  return j.dump(2) + "\n";
}

}  // namespace treechain
