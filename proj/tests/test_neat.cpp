#include <gtest/gtest.h>

#include "support.hpp"

using namespace epoet;
using namespace epoet::neat;

namespace {

bool in_bounds(const cppn::CppnGenome& g) {
  for (const auto& n : g.nodes)
    if (std::abs(n.bias) > 10 || std::abs(n.response) > 10) return false;
  for (const auto& c : g.connections)
    if (std::abs(c.weight) > 10) return false;
  return true;
}

NeatConfig zero_rates() {
  NeatConfig c;
  c.node_add_prob = c.node_delete_prob = 0;
  c.activation_mutate_rate = c.bias_mutate_rate = c.response_mutate_rate = c.weight_mutate_rate = 0;
  return c;
}

}  // namespace

TEST(Neat, TableDefaults) {
  NeatConfig c;
  EXPECT_EQ(c.node_add_prob, 0.1);
  EXPECT_EQ(c.node_delete_prob, 0.075);
  EXPECT_EQ(c.weight_mutate_rate, 0.75);
  EXPECT_EQ(c.weight_mutate_power, 0.1);
  EXPECT_EQ(c.bias_init_stdev, 0.1);
  EXPECT_EQ(c.activation_mutate_rate, 0.5);
  EXPECT_TRUE(c.single_structural_mutation);
  EXPECT_EQ(c.initial_connection, "full_nodirect");
  EXPECT_EQ(c.num_hidden, 2);
}

TEST(Neat, InitialTopology) {
  const auto g = initial_genome(0, NeatConfig{});
  EXPECT_EQ(g.nodes.size(), 5u);
  EXPECT_EQ(g.connections.size(), 6u);
  for (const auto& c : g.connections) {
    EXPECT_FALSE(c.from < 0 && c.to == cppn::kOutput) << "direct input->output link";
  }
  EXPECT_EQ(g.count(cppn::NodeKind::hidden), 2);
}

TEST(Neat, InitialDeterministicAndBounded) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    EXPECT_EQ(cppn::genome_to_string(initial_genome(s, {})), cppn::genome_to_string(initial_genome(s, {})));
    EXPECT_TRUE(in_bounds(initial_genome(s, {})));
  }
}

TEST(Neat, ZeroRateMutationIsIdentity) {
  const auto g = initial_genome(4, {});
  for (std::uint64_t s = 0; s < 20; ++s)
    EXPECT_EQ(cppn::genome_to_string(mutate_genome(g, zero_rates(), s)), cppn::genome_to_string(g));
}

TEST(Neat, ForcedNodeAddBookkeeping) {
  NeatConfig c = zero_rates();
  c.node_add_prob = 1.0;
  const auto g = initial_genome(4, {});
  MutationReport rep;
  const auto m = mutate_genome(g, c, 9, &rep);
  EXPECT_EQ(rep.structural, StructuralMutation::add_node);
  EXPECT_EQ(m.nodes.size(), g.nodes.size() + 1);
  std::size_t enabled_before = 0, enabled_after = 0;
  for (const auto& x : g.connections) enabled_before += x.enabled;
  for (const auto& x : m.connections) enabled_after += x.enabled;
  EXPECT_EQ(enabled_after, enabled_before + 1);
  EXPECT_EQ(m.connections.size(), g.connections.size() + 2);
  // New in-link weight 1; out-link inherits the split connection's weight.
  const auto& in = m.connections[m.connections.size() - 2];
  const auto& out = m.connections.back();
  EXPECT_EQ(in.weight, 1.0);
  const auto split = std::find_if(m.connections.begin(), m.connections.end(), [](const auto& x) { return !x.enabled; });
  ASSERT_NE(split, m.connections.end());
  EXPECT_EQ(out.weight, split->weight);
  EXPECT_EQ(in.from, split->from);
  EXPECT_EQ(out.to, split->to);
}

TEST(Neat, DeleteWithoutHiddenIsNoOp) {
  NeatConfig c = zero_rates();
  c.node_delete_prob = 1.0;
  const auto g = testing_support::identity_x_genome();
  MutationReport rep;
  const auto m = mutate_genome(g, c, 1, &rep);
  EXPECT_EQ(rep.structural, StructuralMutation::none);
  EXPECT_EQ(cppn::genome_to_string(m), cppn::genome_to_string(g));
}

TEST(Neat, NodeAddFrequency) {
  const auto g = initial_genome(2, {});
  int adds = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    MutationReport rep;
    mutate_genome(g, {}, 5000 + s, &rep);
    adds += rep.structural == StructuralMutation::add_node;
  }
  EXPECT_NEAR(adds / 1000.0, 0.1, 0.03);
}

TEST(Neat, LongChainsStayBoundedAndAcyclic) {
  NeatConfig c;
  c.weight_mutate_power = c.bias_mutate_power = c.response_mutate_power = 5.0;  // stress the clamps
  auto g = initial_genome(8, c);
  for (std::uint64_t s = 0; s < 300; ++s) {
    g = mutate_genome(g, c, s);
    ASSERT_TRUE(in_bounds(g));
    ASSERT_NO_THROW(cppn::CompiledCppn{g});
  }
}

TEST(Neat, AddOnlyGrowsHiddenCount) {
  NeatConfig c;
  c.node_add_prob = 1.0;
  c.node_delete_prob = 0.0;
  auto g = initial_genome(1, c);
  int prev = g.count(cppn::NodeKind::hidden);
  for (std::uint64_t s = 0; s < 15; ++s) {
    g = mutate_genome(g, c, s);
    EXPECT_EQ(g.count(cppn::NodeKind::hidden), prev + 1);
    prev = g.count(cppn::NodeKind::hidden);
  }
}

TEST(Neat, InvalidConfigRejected) {
  NeatConfig c;
  c.node_add_prob = 1.5;
  EXPECT_THROW(initial_genome(0, c), Error);
}
