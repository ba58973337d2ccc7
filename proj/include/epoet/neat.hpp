#pragma once

// Genome construction and single-parent mutation for CPPN terrains. There is no
// population, speciation or fitness here: environments reproduce inside the
// orchestrator and novelty is judged there.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "epoet/cppn.hpp"
#include "epoet/error.hpp"
#include "epoet/random.hpp"

namespace epoet::neat {

using cppn::ConnectionGene;
using cppn::CppnActivation;
using cppn::CppnGenome;
using cppn::NodeGene;
using cppn::NodeKind;

struct NeatConfig {
  std::string initial_connection = "full_nodirect";
  std::string activation_default = "random";
  double activation_mutate_rate = 0.5;
  std::vector<CppnActivation> activation_options = {cppn::kAllActivations.begin(), cppn::kAllActivations.end()};
  std::string aggregation_default = "sum";
  double aggregation_mutate_rate = 0.1;  // parsed, inert: "sum" is the only option
  std::vector<std::string> aggregation_options = {"sum"};

  double bias_init_mean = 0.0;
  double bias_init_stdev = 0.1;
  std::string bias_init_type = "gaussian";
  double bias_max_value = 10.0;
  double bias_min_value = -10.0;
  double bias_mutate_power = 0.1;
  double bias_mutate_rate = 0.75;

  // Speciation distance terms; parsed, unused.
  double compatibility_disjoint_coefficient = 1.0;
  double compatibility_weight_coefficient = 0.5;

  bool enabled_default = true;
  bool feed_forward = true;
  double node_add_prob = 0.1;
  double node_delete_prob = 0.075;
  int num_inputs = 2;
  int num_hidden = 2;
  int num_outputs = 1;

  double response_init_mean = 1.0;
  double response_init_stdev = 0.0;
  std::string response_init_type = "gaussian";
  double response_max_value = 10.0;
  double response_min_value = -10.0;
  double response_mutate_power = 0.2;
  double response_mutate_rate = 0.75;

  bool single_structural_mutation = true;
  std::string structural_mutation_surer = "default";

  double weight_init_mean = 0.0;
  double weight_init_stdev = 0.25;
  std::string weight_init_type = "gaussian";
  double weight_max_value = 10.0;
  double weight_min_value = -10.0;
  double weight_mutate_power = 0.1;
  double weight_mutate_rate = 0.75;

  void validate() const {
    auto prob = [](double p, const char* name) {
      require(p >= 0.0 && p <= 1.0, ErrorKind::config, std::string(name) + " must be a probability");
    };
    prob(activation_mutate_rate, "neat_activation_mutate_rate");
    prob(aggregation_mutate_rate, "neat_aggregation_mutate_rate");
    prob(bias_mutate_rate, "neat_bias_mutate_rate");
    prob(node_add_prob, "neat_node_add_prob");
    prob(node_delete_prob, "neat_node_delete_prob");
    prob(response_mutate_rate, "neat_response_mutate_rate");
    prob(weight_mutate_rate, "neat_weight_mutate_rate");
    require(initial_connection == "full_nodirect", ErrorKind::config,
            "neat_initial_connection: only full_nodirect is supported");
    require(activation_default == "random", ErrorKind::config, "neat_activation_default: only random is supported");
    require(!activation_options.empty(), ErrorKind::config, "neat_activation_options is empty");
    require(aggregation_default == "sum" && aggregation_options == std::vector<std::string>{"sum"},
            ErrorKind::config, "aggregation: only sum is supported");
    for (const auto* t : {&bias_init_type, &response_init_type, &weight_init_type})
      require(*t == "gaussian" || *t == "normal", ErrorKind::config, "init type must be gaussian");
    require(num_inputs == 2 && num_outputs == 1, ErrorKind::config, "CPPN terrains need 2 inputs and 1 output");
    require(num_hidden >= 0, ErrorKind::config, "neat_num_hidden must be >= 0");
    require(feed_forward, ErrorKind::config, "only feed-forward CPPNs are supported");
    require(structural_mutation_surer == "default" || structural_mutation_surer == "false",
            ErrorKind::config, "neat_structural_mutation_surer must be default or false");
    for (auto [lo, hi] : {std::pair{bias_min_value, bias_max_value}, std::pair{response_min_value, response_max_value},
                          std::pair{weight_min_value, weight_max_value}})
      require(lo <= hi, ErrorKind::config, "min value exceeds max value");
    require(bias_init_stdev >= 0 && response_init_stdev >= 0 && weight_init_stdev >= 0 && bias_mutate_power >= 0 &&
                response_mutate_power >= 0 && weight_mutate_power >= 0,
            ErrorKind::config, "stdev and mutate power must be non-negative");
  }
};

enum class StructuralMutation { none, add_node, delete_node };

struct MutationReport {
  StructuralMutation structural = StructuralMutation::none;
};

namespace detail {

inline double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

inline CppnActivation random_activation(Rng& rng, const NeatConfig& c) {
  return c.activation_options[uniform_index(rng, c.activation_options.size())];
}

inline NodeGene new_node(int id, NodeKind kind, Rng& rng, const NeatConfig& c) {
  NodeGene n;
  n.id = id;
  n.kind = kind;
  n.activation = random_activation(rng, c);
  n.bias = clamp(gaussian(rng, c.bias_init_mean, c.bias_init_stdev), c.bias_min_value, c.bias_max_value);
  n.response = clamp(gaussian(rng, c.response_init_mean, c.response_init_stdev), c.response_min_value,
                     c.response_max_value);
  return n;
}

inline double perturb(Rng& rng, double value, double rate, double power, double lo, double hi) {
  if (uniform01(rng) < rate) value = clamp(value + gaussian(rng, 0.0, power), lo, hi);
  return value;
}

inline void sort_nodes(CppnGenome& g) {
  std::sort(g.nodes.begin(), g.nodes.end(), [](const NodeGene& a, const NodeGene& b) { return a.id < b.id; });
}

}  // namespace detail

/// Two inputs, `num_hidden` hidden nodes and one output; every input feeds
/// every hidden node and every hidden node feeds the output.
inline CppnGenome initial_genome(std::uint64_t rng_seed, const NeatConfig& config) {
  config.validate();
  Rng rng(derive_seed(rng_seed, Stream::genome_init));
  CppnGenome g;
  NodeGene x{cppn::kInputX, NodeKind::input, CppnActivation::identity, 0.0, 1.0};
  NodeGene y{cppn::kInputY, NodeKind::input, CppnActivation::identity, 0.0, 1.0};
  g.nodes = {y, x};
  g.nodes.push_back(detail::new_node(cppn::kOutput, NodeKind::output, rng, config));
  std::vector<int> hidden;
  for (int h = 0; h < config.num_hidden; ++h) {
    g.nodes.push_back(detail::new_node(h + 1, NodeKind::hidden, rng, config));
    hidden.push_back(h + 1);
  }
  g.next_node_id = config.num_hidden + 1;

  auto weight = [&] {
    return detail::clamp(gaussian(rng, config.weight_init_mean, config.weight_init_stdev), config.weight_min_value,
                         config.weight_max_value);
  };
  if (hidden.empty()) {
    // full_nodirect without hidden nodes degenerates to direct links.
    for (int in : {cppn::kInputX, cppn::kInputY}) g.connections.push_back({in, cppn::kOutput, weight(), true});
  } else {
    for (int h : hidden)
      for (int in : {cppn::kInputX, cppn::kInputY}) g.connections.push_back({in, h, weight(), config.enabled_default});
    for (int h : hidden) g.connections.push_back({h, cppn::kOutput, weight(), config.enabled_default});
  }
  detail::sort_nodes(g);
  return g;
}

/// One mutation event: at most one structural change followed by parametric
/// perturbation of every bias, response, weight and activation.
inline CppnGenome mutate_genome(const CppnGenome& parent, const NeatConfig& config, std::uint64_t rng_seed,
                                MutationReport* report = nullptr) {
  Rng rng(derive_seed(rng_seed, Stream::genome_mutation));
  CppnGenome g = parent;
  MutationReport rep;

  auto add_node = [&]() -> bool {
    std::vector<std::size_t> enabled;
    for (std::size_t i = 0; i < g.connections.size(); ++i)
      if (g.connections[i].enabled) enabled.push_back(i);
    if (enabled.empty()) return false;
    const std::size_t pick = enabled[uniform_index(rng, enabled.size())];
    ConnectionGene split = g.connections[pick];
    g.connections[pick].enabled = false;
    const int id = g.next_node_id++;
    g.nodes.push_back(detail::new_node(id, NodeKind::hidden, rng, config));
    g.connections.push_back({split.from, id, 1.0, true});
    g.connections.push_back({id, split.to, split.weight, true});
    detail::sort_nodes(g);
    return true;
  };
  auto delete_node = [&]() -> bool {
    std::vector<int> hidden;
    for (const NodeGene& n : g.nodes)
      if (n.kind == NodeKind::hidden) hidden.push_back(n.id);
    if (hidden.empty()) return false;
    const int victim = hidden[uniform_index(rng, hidden.size())];
    std::erase_if(g.nodes, [victim](const NodeGene& n) { return n.id == victim; });
    std::erase_if(g.connections, [victim](const ConnectionGene& c) { return c.from == victim || c.to == victim; });
    return true;
  };

  if (config.single_structural_mutation) {
    const double div = std::max(1.0, config.node_add_prob + config.node_delete_prob);
    const double r = uniform01(rng);
    if (r < config.node_add_prob / div) {
      if (add_node()) rep.structural = StructuralMutation::add_node;
    } else if (r < (config.node_add_prob + config.node_delete_prob) / div) {
      if (delete_node()) rep.structural = StructuralMutation::delete_node;
    }
  } else {
    if (uniform01(rng) < config.node_add_prob && add_node()) rep.structural = StructuralMutation::add_node;
    if (uniform01(rng) < config.node_delete_prob && delete_node()) rep.structural = StructuralMutation::delete_node;
  }

  for (NodeGene& n : g.nodes) {
    if (n.kind == NodeKind::input) continue;
    n.bias = detail::perturb(rng, n.bias, config.bias_mutate_rate, config.bias_mutate_power, config.bias_min_value,
                             config.bias_max_value);
    n.response = detail::perturb(rng, n.response, config.response_mutate_rate, config.response_mutate_power,
                                 config.response_min_value, config.response_max_value);
    if (uniform01(rng) < config.activation_mutate_rate) n.activation = detail::random_activation(rng, config);
  }
  for (ConnectionGene& c : g.connections)
    c.weight = detail::perturb(rng, c.weight, config.weight_mutate_rate, config.weight_mutate_power,
                               config.weight_min_value, config.weight_max_value);

  if (report) *report = rep;
  return g;
}

}  // namespace epoet::neat
