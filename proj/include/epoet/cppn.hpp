#pragma once

// Compositional pattern producing networks mapping (x, y) in the unit square
// to a height value. Node output = activation(bias + response * sum_i w_i * in_i);
// input nodes pass their coordinate through unchanged.

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "epoet/error.hpp"
#include "epoet/numeric.hpp"

namespace epoet::cppn {

enum class NodeKind { input, hidden, output };

enum class CppnActivation { identity, sin, sigmoid, square, tanh, gauss };

inline constexpr std::array<CppnActivation, 6> kAllActivations = {
    CppnActivation::identity, CppnActivation::sin,  CppnActivation::sigmoid,
    CppnActivation::square,   CppnActivation::tanh, CppnActivation::gauss};

inline constexpr double kParamMin = -10.0;
inline constexpr double kParamMax = 10.0;

inline std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::input: return "input";
    case NodeKind::hidden: return "hidden";
    case NodeKind::output: return "output";
  }
  return "?";
}

inline std::string_view to_string(CppnActivation a) {
  switch (a) {
    case CppnActivation::identity: return "identity";
    case CppnActivation::sin: return "sin";
    case CppnActivation::sigmoid: return "sigmoid";
    case CppnActivation::square: return "square";
    case CppnActivation::tanh: return "tanh";
    case CppnActivation::gauss: return "gauss";
  }
  return "?";
}

inline CppnActivation parse_cppn_activation(std::string_view s) {
  for (CppnActivation a : kAllActivations)
    if (to_string(a) == s) return a;
  fail(ErrorKind::config, "unknown activation '" + std::string(s) + "'");
}

inline NodeKind parse_node_kind(std::string_view s) {
  if (s == "input") return NodeKind::input;
  if (s == "hidden") return NodeKind::hidden;
  if (s == "output") return NodeKind::output;
  fail(ErrorKind::config, "unknown node kind '" + std::string(s) + "'");
}

inline double activate(CppnActivation a, double z) {
  switch (a) {
    case CppnActivation::identity: return z;
    case CppnActivation::sin: return std::sin(z);
    case CppnActivation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case CppnActivation::square: return z * z;
    case CppnActivation::tanh: return std::tanh(z);
    case CppnActivation::gauss: return std::exp(-z * z);
  }
  return z;
}

struct NodeGene {
  int id = 0;
  NodeKind kind = NodeKind::hidden;
  CppnActivation activation = CppnActivation::identity;
  double bias = 0.0;
  double response = 1.0;

  bool operator==(const NodeGene&) const = default;
};

struct ConnectionGene {
  int from = 0;
  int to = 0;
  double weight = 0.0;
  bool enabled = true;

  bool operator==(const ConnectionGene&) const = default;
};

// Input ids are -1 (x) and -2 (y); the output is 0; hidden nodes are positive.
inline constexpr int kInputX = -1;
inline constexpr int kInputY = -2;
inline constexpr int kOutput = 0;

struct CppnGenome {
  std::vector<NodeGene> nodes;  // sorted by id
  std::vector<ConnectionGene> connections;
  int next_node_id = 1;

  const NodeGene* find_node(int id) const {
    auto it = std::find_if(nodes.begin(), nodes.end(), [id](const NodeGene& n) { return n.id == id; });
    return it == nodes.end() ? nullptr : &*it;
  }
  int count(NodeKind kind) const {
    return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [kind](const NodeGene& n) { return n.kind == kind; }));
  }

  bool operator==(const CppnGenome&) const = default;
};

/// Checks the structural invariants; throws structural-error on violation.
inline void validate(const CppnGenome& g) {
  require(g.count(NodeKind::input) == 2, ErrorKind::structural, "genome must have exactly 2 inputs");
  require(g.count(NodeKind::output) == 1, ErrorKind::structural, "genome must have exactly 1 output");
  require(g.find_node(kInputX) && g.find_node(kInputY) && g.find_node(kOutput), ErrorKind::structural,
          "genome is missing a reserved node id");
  require(g.find_node(kInputX)->kind == NodeKind::input && g.find_node(kInputY)->kind == NodeKind::input &&
              g.find_node(kOutput)->kind == NodeKind::output,
          ErrorKind::structural, "reserved node ids have the wrong kind");
  for (std::size_t i = 1; i < g.nodes.size(); ++i)
    require(g.nodes[i - 1].id < g.nodes[i].id, ErrorKind::structural, "node ids must be unique and sorted");
  for (const ConnectionGene& c : g.connections) {
    const NodeGene* to = g.find_node(c.to);
    require(g.find_node(c.from) && to, ErrorKind::structural, "connection references a missing node");
    require(to->kind != NodeKind::input, ErrorKind::structural, "connection into an input node");
  }
}

/// Evaluation plan: nodes in topological order with their enabled in-links.
class CompiledCppn {
 public:
  explicit CompiledCppn(const CppnGenome& g) {
    validate(g);
    const std::size_t n = g.nodes.size();
    std::map<int, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index[g.nodes[i].id] = i;

    std::vector<std::vector<std::size_t>> succ(n);
    std::vector<int> indeg(n, 0);
    incoming_.assign(n, {});
    for (const ConnectionGene& c : g.connections) {
      if (!c.enabled) continue;
      const std::size_t f = index.at(c.from), t = index.at(c.to);
      succ[f].push_back(t);
      ++indeg[t];
      incoming_[t].push_back({f, c.weight});
    }
    // Kahn's algorithm; ties resolved by node order for a stable plan.
    std::vector<std::size_t> ready;
    for (std::size_t i = n; i-- > 0;)
      if (indeg[i] == 0) ready.push_back(i);
    while (!ready.empty()) {
      const std::size_t v = ready.back();
      ready.pop_back();
      order_.push_back(v);
      for (std::size_t w : succ[v])
        if (--indeg[w] == 0) ready.push_back(w);
    }
    if (order_.size() != n) fail(ErrorKind::structural, "cycle detected in CPPN genome");

    nodes_ = g.nodes;
    for (std::size_t i = 0; i < n; ++i) {
      if (g.nodes[i].id == kInputX) x_index_ = i;
      if (g.nodes[i].id == kInputY) y_index_ = i;
      if (g.nodes[i].id == kOutput) out_index_ = i;
    }
  }

  double operator()(double x, double y) const {
    std::vector<double> values(nodes_.size(), 0.0);
    for (std::size_t v : order_) {
      const NodeGene& node = nodes_[v];
      if (node.kind == NodeKind::input) {
        values[v] = v == x_index_ ? x : y;
        continue;
      }
      double agg = 0.0;
      for (const auto& [src, w] : incoming_[v]) agg += w * values[src];
      values[v] = activate(node.activation, node.bias + node.response * agg);
    }
    return values[out_index_];
  }

 private:
  struct InLink {
    std::size_t source;
    double weight;
  };
  std::vector<NodeGene> nodes_;
  std::vector<std::vector<InLink>> incoming_;
  std::vector<std::size_t> order_;
  std::size_t x_index_ = 0, y_index_ = 0, out_index_ = 0;
};

inline double evaluate(const CppnGenome& genome, double x, double y) { return CompiledCppn(genome)(x, y); }

/// Entry (i, j) = evaluate(i/(res-1), j/(res-1)); i runs along x.
inline Eigen::MatrixXd query_grid(const CppnGenome& genome, int resolution) {
  require(resolution >= 2, ErrorKind::argument, "resolution must be >= 2");
  const CompiledCppn net(genome);
  Eigen::MatrixXd grid(resolution, resolution);
  const double denom = static_cast<double>(resolution - 1);
  for (int i = 0; i < resolution; ++i)
    for (int j = 0; j < resolution; ++j) grid(i, j) = net(i / denom, j / denom);
  return grid;
}

// ---------------------------------------------------------------------------
// Text format, version 1:
//
//   cppn-genome 1
//   next_node_id <int>
//   node <id> <kind> <activation> <bias> <response>
//   conn <from> <to> <weight> <0|1>
//   end
//
// Reals are written in shortest round-trip form, so the format is lossless.

inline constexpr int kGenomeFormatVersion = 1;

inline void write_genome(std::ostream& os, const CppnGenome& g) {
  os << "cppn-genome " << kGenomeFormatVersion << '\n';
  os << "next_node_id " << g.next_node_id << '\n';
  for (const NodeGene& n : g.nodes)
    os << "node " << n.id << ' ' << to_string(n.kind) << ' ' << to_string(n.activation) << ' '
       << format_double(n.bias) << ' ' << format_double(n.response) << '\n';
  for (const ConnectionGene& c : g.connections)
    os << "conn " << c.from << ' ' << c.to << ' ' << format_double(c.weight) << ' ' << (c.enabled ? 1 : 0) << '\n';
  os << "end\n";
}

inline std::string genome_to_string(const CppnGenome& g) {
  std::ostringstream os;
  write_genome(os, g);
  return os.str();
}

inline CppnGenome read_genome(std::istream& is) {
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "cppn-genome") fail(ErrorKind::config, "not a cppn genome");
  if (version != kGenomeFormatVersion)
    fail(ErrorKind::version, "unsupported cppn genome version " + std::to_string(version));
  CppnGenome g;
  bool ended = false;
  while (!ended && is >> tag) {
    if (tag == "next_node_id") {
      is >> g.next_node_id;
    } else if (tag == "node") {
      NodeGene n;
      std::string kind, act, bias, response;
      is >> n.id >> kind >> act >> bias >> response;
      n.kind = parse_node_kind(kind);
      n.activation = parse_cppn_activation(act);
      n.bias = parse_double(bias);
      n.response = parse_double(response);
      g.nodes.push_back(n);
    } else if (tag == "conn") {
      ConnectionGene c;
      std::string weight;
      int enabled = 1;
      is >> c.from >> c.to >> weight >> enabled;
      c.weight = parse_double(weight);
      c.enabled = enabled != 0;
      g.connections.push_back(c);
    } else if (tag == "end") {
      ended = true;
    } else {
      fail(ErrorKind::config, "unexpected token in genome: '" + tag + "'");
    }
    if (!is) fail(ErrorKind::config, "truncated genome record");
  }
  if (!ended) fail(ErrorKind::config, "genome text missing 'end'");
  std::sort(g.nodes.begin(), g.nodes.end(), [](const NodeGene& a, const NodeGene& b) { return a.id < b.id; });
  validate(g);
  return g;
}

inline CppnGenome genome_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_genome(is);
}

}  // namespace epoet::cppn
