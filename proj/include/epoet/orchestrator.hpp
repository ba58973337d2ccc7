#pragma once

// The coevolution loop. Per iteration t:
//   1. t > 0 and t % N_mutate == 0        -> mutate_envs
//   2. one ES step per active pair, then a scoring rollout per pair
//   3. one Train_SAC call                  (epoet-sac)
//   4. t % N_transfer == 0                 -> transfers; SAC actor refresh (epoet-sac)
//   5. t % (4 N_transfer) == 4 N_transfer - 2 -> SAC actor injection + crossover (epoet-sac)
//
// Rollouts go through a RolloutBackend and the learner through SacLearner so
// either can be replaced by a stub.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "epoet/config.hpp"
#include "epoet/error.hpp"
#include "epoet/es.hpp"
#include "epoet/mlp.hpp"
#include "epoet/neat.hpp"
#include "epoet/numeric.hpp"
#include "epoet/random.hpp"
#include "epoet/sac.hpp"
#include "epoet/serialize.hpp"
#include "epoet/terrain.hpp"
#include "epoet/walker.hpp"
#include "epoet/worker_pool.hpp"

namespace epoet::poet {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Rollouts

struct RolloutOutcome {
  double total_return = 0.0;
  int steps = 0;
  bool finished = false;
  std::vector<Transition> transitions;
};

/// Must be safe to call concurrently.
class RolloutBackend {
 public:
  virtual ~RolloutBackend() = default;
  virtual RolloutOutcome rollout(const PolicyParams& params, const terrain::Heightmap& map, std::uint64_t seed,
                                 bool record) const = 0;
};

class WalkerBackend final : public RolloutBackend {
 public:
  explicit WalkerBackend(walker::WalkerConfig config) : config_(config) {}

  RolloutOutcome rollout(const PolicyParams& params, const terrain::Heightmap& map, std::uint64_t seed,
                         bool record) const override {
    walker::RolloutResult r = walker::rollout(params, map, seed, config_, {record, false});
    return {r.total_return, r.steps, r.finished, std::move(r.transitions)};
  }

 private:
  walker::WalkerConfig config_;
};

// ---------------------------------------------------------------------------
// Reshaping between the SAC actor and the ES policy layout

/// Sorted source unit indices kept for each hidden layer.
struct ReshapeSelection {
  std::vector<std::vector<int>> hidden;

  bool operator==(const ReshapeSelection&) const = default;
};

inline ReshapeSelection make_selection(const std::vector<int>& source_hidden, const std::vector<int>& target_hidden,
                                       std::uint64_t seed) {
  require(source_hidden.size() == target_hidden.size(), ErrorKind::structural,
          "reshape needs the same number of hidden layers");
  ReshapeSelection sel;
  for (std::size_t l = 0; l < source_hidden.size(); ++l) {
    require(target_hidden[l] <= source_hidden[l], ErrorKind::structural, "reshape target layer wider than source");
    std::vector<int> idx(static_cast<std::size_t>(source_hidden[l]));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, Stream::reshape, {l}));
    // Partial Fisher-Yates with explicit draws (std::shuffle is not portable across libraries).
    for (int i = 0; i < target_hidden[l]; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) + uniform_index(rng, idx.size() - static_cast<std::size_t>(i));
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    }
    idx.resize(static_cast<std::size_t>(target_hidden[l]));
    std::sort(idx.begin(), idx.end());
    sel.hidden.push_back(std::move(idx));
  }
  return sel;
}

namespace detail {

inline void check_reshape_shapes(const MlpShape& source, const MlpShape& target, const ReshapeSelection& sel) {
  require(source.num_layers() == target.num_layers() && source.input_dim() == target.input_dim(),
          ErrorKind::structural, "reshape: layer count or input size differs");
  require(source.output_dim() >= target.output_dim(), ErrorKind::structural, "reshape: source output too small");
  require(sel.hidden.size() + 1 == static_cast<std::size_t>(source.num_layers()), ErrorKind::structural,
          "reshape: selection does not match layer count");
  for (std::size_t l = 0; l < sel.hidden.size(); ++l)
    require(static_cast<int>(sel.hidden[l].size()) == target.sizes[l + 1], ErrorKind::structural,
            "reshape: selection size does not match target width");
}

inline std::vector<int> row_map(const ReshapeSelection& sel, int layer, int out_rows) {
  if (layer < static_cast<int>(sel.hidden.size())) return sel.hidden[static_cast<std::size_t>(layer)];
  std::vector<int> rows(static_cast<std::size_t>(out_rows));
  std::iota(rows.begin(), rows.end(), 0);  // output layer: leading rows (the mean head)
  return rows;
}

inline std::vector<int> col_map(const ReshapeSelection& sel, int layer, int in_cols) {
  if (layer > 0) return sel.hidden[static_cast<std::size_t>(layer - 1)];
  std::vector<int> cols(static_cast<std::size_t>(in_cols));
  std::iota(cols.begin(), cols.end(), 0);
  return cols;
}

}  // namespace detail

/// Sub-network of `source` at the selected hidden units, in the target layout.
/// The target keeps its own activations.
inline PolicyParams reshape_params(const MlpParams& source, const MlpShape& target, const ReshapeSelection& sel) {
  detail::check_reshape_shapes(source.shape, target, sel);
  PolicyParams out = zero_mlp(target);
  for (int l = 0; l < target.num_layers(); ++l) {
    const auto rows = detail::row_map(sel, l, target.sizes[l + 1]);
    const auto cols = detail::col_map(sel, l, target.sizes[l]);
    auto w = out.weights(l);
    auto b = out.biases(l);
    const auto sw = source.weights(l);
    const auto sb = source.biases(l);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < cols.size(); ++j) w(Eigen::Index(i), Eigen::Index(j)) = sw(rows[i], cols[j]);
      b[Eigen::Index(i)] = sb[rows[i]];
    }
  }
  return out;
}

/// Inverse of reshape_params: writes `theta` into the selected units of
/// `target`. Selected rows are cleared first, so reshape(embed(theta)) == theta.
inline void embed_params(MlpParams& target, const PolicyParams& theta, const ReshapeSelection& sel) {
  detail::check_reshape_shapes(target.shape, theta.shape, sel);
  for (int l = 0; l < theta.shape.num_layers(); ++l) {
    const auto rows = detail::row_map(sel, l, theta.shape.sizes[l + 1]);
    const auto cols = detail::col_map(sel, l, theta.shape.sizes[l]);
    auto w = target.weights(l);
    auto b = target.biases(l);
    const auto tw = theta.weights(l);
    const auto tb = theta.biases(l);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      w.row(rows[i]).setZero();
      for (std::size_t j = 0; j < cols.size(); ++j) w(rows[i], cols[j]) = tw(Eigen::Index(i), Eigen::Index(j));
      b[rows[i]] = tb[Eigen::Index(i)];
    }
  }
}

/// Deterministic SAC actor tanh(mu(s)) as a plain policy network.
inline PolicyParams sac_actor_policy(const sac::SacNets& nets) {
  const MlpShape& s = nets.policy.shape;
  MlpShape shape = s;
  shape.sizes.back() = s.output_dim() / 2;
  shape.output = Activation::tanh;
  PolicyParams p = zero_mlp(shape);
  for (int l = 0; l < shape.num_layers(); ++l) {
    p.weights(l) = nets.policy.weights(l).topRows(shape.sizes[l + 1]);
    p.biases(l) = nets.policy.biases(l).head(shape.sizes[l + 1]);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Crossover

/// Returns true for heads (take the donor's entry).
using CoinFn = std::function<bool()>;

inline CoinFn seeded_coin(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [rng] { return uniform01(*rng) < 0.5; };
}

/// Per layer: one coin per unit for its whole incoming weight row, then one per bias entry.
inline PolicyParams crossover_single(const PolicyParams& theta, const PolicyParams& donor, const CoinFn& coin) {
  require(theta.shape == donor.shape, ErrorKind::structural, "crossover parents have different shapes");
  PolicyParams child = theta;
  for (int l = 0; l < theta.shape.num_layers(); ++l) {
    auto w = child.weights(l);
    const auto dw = donor.weights(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      if (coin()) w.row(i) = dw.row(i);
    auto b = child.biases(l);
    const auto db = donor.biases(l);
    for (Eigen::Index i = 0; i < b.size(); ++i)
      if (coin()) b[i] = db[i];
  }
  return child;
}

struct CrossoverOutcome {
  double old_return = 0.0;
  double new_return = 0.0;
  bool replaced = false;
  PolicyParams offspring;
};

/// One pair of the crossover loop: keep the offspring only if it scores strictly higher.
template <typename Evaluate>
CrossoverOutcome crossover_pair(const PolicyParams& theta, const PolicyParams& donor, Evaluate&& evaluate,
                                const CoinFn& coin) {
  CrossoverOutcome out;
  out.old_return = evaluate(theta);
  out.offspring = crossover_single(theta, donor, coin);
  out.new_return = evaluate(out.offspring);
  out.replaced = out.new_return > out.old_return;
  return out;
}

/// Whole crossover pass over `agents`. evaluate(m, params) scores on agent m's
/// environment; archive(m, old) receives every displaced parameter vector.
template <typename Evaluate, typename Archive>
std::vector<CrossoverOutcome> crossover(std::vector<PolicyParams>& agents, const PolicyParams& donor,
                                        Evaluate&& evaluate, const std::function<CoinFn(std::size_t)>& coins,
                                        Archive&& archive) {
  std::vector<CrossoverOutcome> out;
  for (std::size_t m = 0; m < agents.size(); ++m) {
    CrossoverOutcome r = crossover_pair(
        agents[m], donor, [&](const PolicyParams& p) { return evaluate(m, p); }, coins(m));
    if (r.replaced) {
      archive(m, agents[m]);
      agents[m] = r.offspring;
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// PATA-EC

inline std::vector<double> clip_scores(const std::vector<double>& scores, double lower, double upper) {
  std::vector<double> c(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) c[i] = std::clamp(scores[i], lower, upper);
  return c;
}

/// Clipped, centered-rank score vector characterizing an environment.
inline std::vector<double> pata_ec_vector(const std::vector<double>& scores, double lower, double upper) {
  return centered_ranks(clip_scores(scores, lower, upper));
}

/// Minimal criterion on the best clipped score: strictly inside (lower, upper).
inline bool passes_minimal_criterion(double eligibility_score, double lower, double upper) {
  const double c = std::clamp(eligibility_score, lower, upper);
  return c > lower && c < upper;
}

inline double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), ErrorKind::structural, "PATA-EC vectors have different lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// Mean distance to the k nearest accepted vectors (k capped at the archive size).
inline double novelty(const std::vector<double>& candidate, const std::vector<std::vector<double>>& accepted, int k) {
  if (accepted.empty()) return 0.0;
  std::vector<double> d;
  d.reserve(accepted.size());
  for (const auto& a : accepted) d.push_back(euclidean(candidate, a));
  std::sort(d.begin(), d.end());
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(k), d.size());
  return std::accumulate(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
}

/// Candidate indices by descending novelty; ties keep index order.
inline std::vector<std::size_t> pata_ec_rank(const std::vector<std::vector<double>>& candidates,
                                             const std::vector<std::vector<double>>& accepted, int k,
                                             std::vector<double>* novelty_out = nullptr) {
  std::vector<double> nov;
  for (const auto& c : candidates) nov.push_back(novelty(c, accepted, k));
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return nov[a] > nov[b]; });
  if (novelty_out) *novelty_out = nov;
  return order;
}

/// Index of the highest score (first on ties); scores must be non-empty.
inline std::size_t evaluate_candidates(const std::vector<double>& candidate_scores) {
  require(!candidate_scores.empty(), ErrorKind::precondition, "no transfer candidates");
  return static_cast<std::size_t>(std::max_element(candidate_scores.begin(), candidate_scores.end()) -
                                  candidate_scores.begin());
}

/// Replacement rule for transfers and crossover.
inline bool should_replace(double candidate, double incumbent) { return candidate > incumbent; }

// ---------------------------------------------------------------------------
// SAC learner

class SacLearner {
 public:
  virtual ~SacLearner() = default;
  virtual void push(const std::vector<Transition>& transitions, std::int64_t source) = 0;
  /// One Train_SAC call on an environment drawn from `maps`.
  virtual void train_iteration(const std::vector<const terrain::Heightmap*>& maps, std::uint64_t seed) = 0;
  virtual std::int64_t iterations() const = 0;
  /// Actor in the ES layout.
  virtual PolicyParams reshaped_actor() const = 0;
  /// Full deterministic actor.
  virtual PolicyParams actor_policy() const = 0;
  virtual void load_from_es(const PolicyParams& theta) = 0;
  virtual json to_json() const = 0;
  virtual void from_json(const json& j) = 0;
  virtual void save_buffer(const std::string& /*path*/) const {}
  virtual void load_buffer(const std::string& /*path*/) {}
  virtual std::int64_t buffer_size() const { return 0; }
};

class WalkerSacLearner final : public SacLearner {
 public:
  WalkerSacLearner(const sac::SacConfig& sac_config, const walker::WalkerConfig& walker_config,
                   const MlpShape& es_shape, int steps_per_iteration, std::uint64_t seed)
      : config_(sac_config),
        walker_(walker_config),
        es_shape_(es_shape),
        steps_per_iteration_(steps_per_iteration),
        state_(sac::make_sac_state(walker::kObservationDim, walker::kActionDim, sac_config, seed)),
        buffer_(sac_config.replay_buffer_size, walker::kObservationDim, walker::kActionDim) {
    std::vector<int> es_hidden(es_shape.sizes.begin() + 1, es_shape.sizes.end() - 1);
    selection_ = make_selection(sac_config.hidden, es_hidden, derive_seed(seed, Stream::reshape));
  }

  void push(const std::vector<Transition>& transitions, std::int64_t source) override {
    for (const Transition& t : transitions) buffer_.push(t, source);
  }

  void train_iteration(const std::vector<const terrain::Heightmap*>& maps, std::uint64_t seed) override {
    std::vector<walker::WalkerEnv> envs;
    envs.reserve(maps.size());
    for (const auto* m : maps) envs.emplace_back(*m, walker_);
    std::vector<Environment*> ptrs;
    for (auto& e : envs) ptrs.push_back(&e);
    sac::train_sac(state_, ptrs, buffer_, steps_per_iteration_, config_, seed);
  }

  std::int64_t iterations() const override { return state_.train_calls; }

  PolicyParams reshaped_actor() const override { return reshape_params(state_.nets.policy, es_shape_, selection_); }
  PolicyParams actor_policy() const override { return sac_actor_policy(state_.nets); }
  void load_from_es(const PolicyParams& theta) override { embed_params(state_.nets.policy, theta, selection_); }

  json to_json() const override { return io::to_json(state_); }
  void from_json(const json& j) override { state_ = io::sac_state_from_json(j); }
  void save_buffer(const std::string& path) const override { buffer_.save(path); }
  void load_buffer(const std::string& path) override { buffer_ = sac::ReplayBuffer::load(path); }
  std::int64_t buffer_size() const override { return buffer_.size(); }

  const sac::SacState& state() const { return state_; }
  const sac::ReplayBuffer& buffer() const { return buffer_; }
  const ReshapeSelection& selection() const { return selection_; }

 private:
  sac::SacConfig config_;
  walker::WalkerConfig walker_;
  MlpShape es_shape_;
  int steps_per_iteration_;
  sac::SacState state_;
  sac::ReplayBuffer buffer_;
  ReshapeSelection selection_;
};

// ---------------------------------------------------------------------------
// Pool state

struct EAPair {
  std::int64_t id = 0;
  std::int64_t parent_id = -1;
  std::int64_t created_iteration = 0;
  std::string origin = "init";  // init | mutation | sac
  terrain::TerrainSpec env;
  es::EsState agent;
  double score = std::numeric_limits<double>::quiet_NaN();
  double best_score = -std::numeric_limits<double>::infinity();
  double eligibility_score = std::numeric_limits<double>::quiet_NaN();

  bool solved(double threshold) const { return best_score >= threshold; }
};

struct ArchivedAgent {
  std::int64_t pair_id = 0;
  std::int64_t iteration = 0;
  std::string reason;
  PolicyParams theta;
};

struct RunLogRow {
  std::int64_t iteration = 0;
  std::int64_t pair_id = 0;
  double score = 0.0;
  double mean_return = 0.0;
  double max_return = 0.0;
  double lr = 0.0;
  double noise_std = 0.0;
  double elevation_z = 0.0;
  std::string events;
};

struct EventRow {
  std::int64_t iteration = 0;
  std::string event;
  std::int64_t pair_id = -1;
  std::string detail;
};

inline std::string run_log_header() { return "iteration,pair_id,score,mean_return,max_return,lr,noise_std,elevation_z,events"; }
inline std::string event_log_header() { return "iteration,event,pair_id,detail"; }

inline std::string to_csv(const RunLogRow& r) {
  std::ostringstream os;
  os << r.iteration << ',' << r.pair_id << ',' << format_double(r.score) << ',' << format_double(r.mean_return) << ','
     << format_double(r.max_return) << ',' << format_double(r.lr) << ',' << format_double(r.noise_std) << ','
     << format_double(r.elevation_z) << ',' << r.events;
  return os.str();
}

inline std::string to_csv(const EventRow& e) {
  std::ostringstream os;
  os << e.iteration << ',' << e.event << ',' << e.pair_id << ',' << e.detail;
  return os.str();
}

namespace detail {

inline json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double from_nullable(const json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Engine

class Engine {
 public:
  explicit Engine(RunConfig config, std::shared_ptr<const RolloutBackend> backend = nullptr,
                  std::unique_ptr<SacLearner> learner = nullptr)
      : config_(std::move(config)), pool_(config_.num_workers) {
    if (config_.mode == RunMode::sac_only) {
      // Baseline terrain: random bowl only, fixed maximum height.
      config_.terrain.bowl_weight = 1.0;
      config_.terrain.cppn_weight = 0.0;
      config_.terrain.elevation_step = 0.0;
    }
    config_.validate();
    backend_ = backend ? std::move(backend) : std::make_shared<WalkerBackend>(config_.walker);
    if (config_.mode != RunMode::sac_only)
      noise_ = std::make_unique<es::NoiseTable>(config_.es.noise_table_size, config_.es.noise_table_seed);
    if (uses_sac()) {
      learner_ = learner ? std::move(learner)
                         : std::make_unique<WalkerSacLearner>(config_.sac, config_.walker, es_shape(),
                                                              config_.poet.sac_steps_per_iteration, config_.seed);
    }
  }

  /// Creates the initial pair and runs SAC pretraining.
  void initialize() {
    require(!initialized_, ErrorKind::precondition, "engine already initialized");
    initialized_ = true;
    EAPair p;
    p.id = next_pair_id_++;
    p.env.genome = neat::initial_genome(derive_seed(config_.seed, Stream::genome_init), config_.neat);
    p.env.terrain_seed = derive_seed(config_.seed, Stream::terrain, {0});
    p.env.settings = config_.terrain;
    if (config_.mode != RunMode::sac_only) p.agent = es::initial_state(config_.seed, config_.es);
    pairs_.push_back(std::move(p));
    if (uses_sac()) {
      const terrain::Heightmap map = realize(pairs_.front(), 0);
      for (int i = 0; i < config_.poet.sac_pretrain_iterations; ++i) learner_->train_iteration({&map}, sac_seed());
      event(0, "sac_pretrained", -1, std::to_string(learner_->iterations()));
    }
  }

  void run_iteration() {
    require(initialized_, ErrorKind::precondition, "engine not initialized");
    const std::int64_t t = next_iteration_;
    flags_.clear();
    if (config_.mode == RunMode::sac_only) {
      sac_only_iteration(t);
    } else {
      poet_iteration(t);
    }
    ++next_iteration_;
  }

  void run_until(std::int64_t end) {
    while (next_iteration_ < end) run_iteration();
  }

  // --- schedule predicates -------------------------------------------------
  bool is_mutation_iteration(std::int64_t t) const { return t > 0 && t % config_.poet.mutation_interval == 0; }
  bool is_transfer_iteration(std::int64_t t) const { return t % config_.poet.iterations_before_transfer == 0; }
  bool is_injection_iteration(std::int64_t t) const {
    const std::int64_t period = 4 * config_.poet.iterations_before_transfer;
    return t > 0 && t % period == period - 2;
  }

  // --- steps (public for targeted tests) --------------------------------------
  void mutate_envs(std::int64_t t);
  void transfer_round(std::int64_t t, const std::vector<terrain::Heightmap>& maps);
  void refresh_sac_actor(std::int64_t t, const std::vector<terrain::Heightmap>& maps);
  bool inject_sac_actor(std::int64_t t);

  // --- accessors ---------------------------------------------------------
  const RunConfig& config() const { return config_; }
  const std::vector<EAPair>& pairs() const { return pairs_; }
  std::vector<EAPair>& mutable_pairs() { return pairs_; }
  const std::vector<EAPair>& archived_pairs() const { return archived_pairs_; }
  const std::vector<ArchivedAgent>& agent_archive() const { return agent_archive_; }
  std::int64_t next_iteration() const { return next_iteration_; }
  bool initialized() const { return initialized_; }
  SacLearner* learner() const { return learner_.get(); }
  const std::vector<RunLogRow>& run_log() const { return run_log_; }
  const std::vector<EventRow>& events() const { return events_; }
  void clear_logs() {
    run_log_.clear();
    events_.clear();
  }
  bool uses_sac() const { return config_.mode != RunMode::epoet; }
  MlpShape es_shape() const { return es::policy_shape(config_.es); }

  terrain::Heightmap realize(const EAPair& p, std::int64_t t) const {
    terrain::TerrainSpec s = p.env.at_iteration(t);
    s.settings = config_.terrain;
    return terrain::compose_heightmap(s);
  }

  /// Pair with the highest recorded score (first on ties).
  const EAPair* best_pair() const {
    const EAPair* best = nullptr;
    for (const auto& p : pairs_)
      if (std::isfinite(p.score) && (!best || p.score > best->score)) best = &p;
    return best;
  }

  // --- persistence -------------------------------------------------------
  json state_to_json() const {
    json j;
    j["next_iteration"] = next_iteration_;
    j["next_pair_id"] = next_pair_id_;
    j["initialized"] = initialized_;
    auto pair_json = [](const EAPair& p) {
      return json{{"id", p.id},
                  {"parent_id", p.parent_id},
                  {"created_iteration", p.created_iteration},
                  {"origin", p.origin},
                  {"env", io::to_json(p.env)},
                  {"agent", io::to_json(p.agent)},
                  {"score", detail::nullable(p.score)},
                  {"best_score", detail::nullable(p.best_score)},
                  {"eligibility_score", detail::nullable(p.eligibility_score)}};
    };
    j["pairs"] = json::array();
    for (const auto& p : pairs_) j["pairs"].push_back(pair_json(p));
    j["archived_pairs"] = json::array();
    for (const auto& p : archived_pairs_) j["archived_pairs"].push_back(pair_json(p));
    j["agent_archive"] = json::array();
    for (const auto& a : agent_archive_)
      j["agent_archive"].push_back(
          {{"pair_id", a.pair_id}, {"iteration", a.iteration}, {"reason", a.reason}, {"theta", io::to_json(a.theta)}});
    j["sac"] = learner_ ? learner_->to_json() : json(nullptr);
    return j;
  }

  void state_from_json(const json& j) {
    next_iteration_ = j.at("next_iteration").get<std::int64_t>();
    next_pair_id_ = j.at("next_pair_id").get<std::int64_t>();
    initialized_ = j.at("initialized").get<bool>();
    auto pair_from = [this](const json& pj) {
      EAPair p;
      p.id = pj.at("id").get<std::int64_t>();
      p.parent_id = pj.at("parent_id").get<std::int64_t>();
      p.created_iteration = pj.at("created_iteration").get<std::int64_t>();
      p.origin = pj.at("origin").get<std::string>();
      p.env = io::spec_from_json(pj.at("env"), config_.terrain);
      p.agent = io::es_state_from_json(pj.at("agent"));
      p.score = detail::from_nullable(pj.at("score"), std::numeric_limits<double>::quiet_NaN());
      p.best_score = detail::from_nullable(pj.at("best_score"), -std::numeric_limits<double>::infinity());
      p.eligibility_score = detail::from_nullable(pj.at("eligibility_score"), std::numeric_limits<double>::quiet_NaN());
      return p;
    };
    pairs_.clear();
    for (const auto& pj : j.at("pairs")) pairs_.push_back(pair_from(pj));
    archived_pairs_.clear();
    for (const auto& pj : j.at("archived_pairs")) archived_pairs_.push_back(pair_from(pj));
    agent_archive_.clear();
    for (const auto& aj : j.at("agent_archive"))
      agent_archive_.push_back({aj.at("pair_id").get<std::int64_t>(), aj.at("iteration").get<std::int64_t>(),
                                aj.at("reason").get<std::string>(), io::mlp_from_json(aj.at("theta"))});
    if (learner_) {
      require(!j.at("sac").is_null(), ErrorKind::config, "checkpoint has no SAC state for a SAC mode run");
      learner_->from_json(j.at("sac"));
    }
  }

 private:
  std::uint64_t sac_seed() const { return derive_seed(config_.seed, Stream::sac_env); }

  void event(std::int64_t t, std::string name, std::int64_t pair, std::string detail = "") {
    events_.push_back({t, std::move(name), pair, std::move(detail)});
  }

  void flag(std::int64_t pair, const std::string& f) {
    for (auto& [id, s] : flags_)
      if (id == pair) {
        s += s.empty() ? f : "|" + f;
        return;
      }
    flags_.emplace_back(pair, f);
  }

  std::string flags_for(std::int64_t pair) const {
    for (const auto& [id, s] : flags_)
      if (id == pair) return s;
    return "";
  }

  std::vector<terrain::Heightmap> realize_all(std::int64_t t) const {
    std::vector<terrain::Heightmap> maps;
    maps.reserve(pairs_.size());
    for (const auto& p : pairs_) maps.push_back(realize(p, t));
    return maps;
  }

  double score_once(const PolicyParams& theta, const terrain::Heightmap& map, std::uint64_t seed) const {
    return backend_->rollout(theta, map, seed, false).total_return;
  }

  void retire_oldest(std::int64_t t) {
    while (static_cast<int>(pairs_.size()) > config_.poet.max_num_envs) {
      EAPair old = std::move(pairs_.front());
      pairs_.erase(pairs_.begin());
      agent_archive_.push_back({old.id, t, "retired", old.agent.theta});
      event(t, "archive_pair", old.id);
      archived_pairs_.push_back(std::move(old));
    }
  }

  void poet_iteration(std::int64_t t);
  void sac_only_iteration(std::int64_t t);

  RunConfig config_;
  WorkerPool pool_;
  std::shared_ptr<const RolloutBackend> backend_;
  std::unique_ptr<es::NoiseTable> noise_;
  std::unique_ptr<SacLearner> learner_;
  std::vector<EAPair> pairs_;
  std::vector<EAPair> archived_pairs_;
  std::vector<ArchivedAgent> agent_archive_;
  std::int64_t next_iteration_ = 0;
  std::int64_t next_pair_id_ = 0;
  bool initialized_ = false;
  std::vector<RunLogRow> run_log_;
  std::vector<EventRow> events_;
  std::vector<std::pair<std::int64_t, std::string>> flags_;
};

inline void Engine::poet_iteration(std::int64_t t) {
  if (is_mutation_iteration(t)) mutate_envs(t);

  std::vector<terrain::Heightmap> maps = realize_all(t);
  std::vector<es::EsStepReport> reports;
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    EAPair& p = pairs_[i];
    const terrain::Heightmap& map = maps[i];
    auto objective = [&](const PolicyParams& params, std::uint64_t seed) {
      return backend_->rollout(params, map, seed, false).total_return;
    };
    const std::uint64_t step_seed =
        derive_seed(config_.seed, Stream::es_noise, {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(p.id)});
    reports.push_back(es::es_step(p.agent, *noise_, objective, step_seed, config_.es, &pool_));
  }

  // Scoring rollouts; their transitions feed the replay buffer in pair order.
  const bool record = uses_sac();
  auto outcomes = pool_.map(pairs_.size(), [&](std::size_t i) {
    std::vector<RolloutOutcome> eps;
    for (int e = 0; e < config_.poet.eval_episodes; ++e)
      eps.push_back(backend_->rollout(pairs_[i].agent.theta, maps[i],
                                      derive_seed(config_.seed, Stream::evaluation,
                                                  {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(pairs_[i].id),
                                                   static_cast<std::uint64_t>(e)}),
                                      record));
    return eps;
  });
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    double total = 0.0;
    for (auto& o : outcomes[i]) {
      total += o.total_return;
      if (record) learner_->push(o.transitions, pairs_[i].id);
    }
    pairs_[i].score = total / config_.poet.eval_episodes;
    pairs_[i].best_score = std::max(pairs_[i].best_score, pairs_[i].score);
  }

  if (uses_sac()) {
    std::vector<const terrain::Heightmap*> ptrs;
    for (const auto& m : maps) ptrs.push_back(&m);
    learner_->train_iteration(ptrs, sac_seed());
  }

  if (is_transfer_iteration(t)) {
    transfer_round(t, maps);
    if (uses_sac()) refresh_sac_actor(t, maps);
  }
  if (uses_sac() && is_injection_iteration(t)) inject_sac_actor(t);

  std::vector<std::int64_t> logged;
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    const EAPair& p = pairs_[i];
    RunLogRow row;
    row.iteration = t;
    row.pair_id = p.id;
    row.score = p.score;
    if (i < reports.size() && i < maps.size()) {
      row.mean_return = reports[i].mean_return;
      row.max_return = reports[i].max_return;
    } else {
      row.mean_return = row.max_return = std::numeric_limits<double>::quiet_NaN();
    }
    row.lr = p.agent.lr;
    row.noise_std = p.agent.noise_std;
    row.elevation_z = p.env.at_iteration(t).elevation_z();
    row.events = flags_for(p.id);
    run_log_.push_back(row);
  }
}

inline void Engine::sac_only_iteration(std::int64_t t) {
  const terrain::Heightmap map = realize(pairs_.front(), t);
  learner_->train_iteration({&map}, sac_seed());
  const double score = score_once(learner_->actor_policy(), map,
                                  derive_seed(config_.seed, Stream::evaluation, {static_cast<std::uint64_t>(t)}));
  EAPair& p = pairs_.front();
  p.score = score;
  p.best_score = std::max(p.best_score, score);
  run_log_.push_back({t, -1, score, std::numeric_limits<double>::quiet_NaN(),
                      std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0, map.elevation_z, ""});
}

inline void Engine::mutate_envs(std::int64_t t) {
  const auto& pc = config_.poet;
  std::vector<std::int64_t> parents;
  for (const auto& p : pairs_)
    if (std::isfinite(p.score) && p.score >= pc.repro_threshold) parents.push_back(p.id);
  event(t, "mutate_envs", -1, "eligible=" + std::to_string(parents.size()));
  if (parents.empty()) return;

  // Agents that characterize environments: active pairs, then the archive.
  std::vector<PolicyParams> agents;
  for (const auto& p : pairs_) agents.push_back(p.agent.theta);
  for (const auto& a : agent_archive_) agents.push_back(a.theta);

  auto score_all = [&](const terrain::Heightmap& map, std::uint64_t seed) {
    return pool_.map(agents.size(), [&](std::size_t i) { return score_once(agents[i], map, seed); });
  };

  std::vector<std::vector<double>> accepted;
  {
    std::vector<const EAPair*> envs;
    for (const auto& p : pairs_) envs.push_back(&p);
    for (const auto& p : archived_pairs_) envs.push_back(&p);
    for (const EAPair* e : envs) {
      const terrain::Heightmap map = realize(*e, t);
      accepted.push_back(pata_ec_vector(
          score_all(map, derive_seed(config_.seed, Stream::pata_ec, {static_cast<std::uint64_t>(t),
                                                                     static_cast<std::uint64_t>(e->id)})),
          pc.mc_lower, pc.mc_upper));
    }
  }

  std::vector<EAPair> admitted;
  for (std::int64_t parent_id : parents) {
    const EAPair& parent = *std::find_if(pairs_.begin(), pairs_.end(), [&](const EAPair& p) { return p.id == parent_id; });
    struct Candidate {
      terrain::TerrainSpec env;
      std::vector<double> scores;
      double eligibility;
    };
    std::vector<Candidate> passing;
    for (int c = 0; c < pc.num_proposals; ++c) {
      const std::uint64_t key = derive_seed(config_.seed, Stream::genome_mutation,
                                            {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(parent_id),
                                             static_cast<std::uint64_t>(c)});
      Candidate cand;
      cand.env = parent.env;
      cand.env.genome = neat::mutate_genome(parent.env.genome, config_.neat, key);
      cand.env.terrain_seed = derive_seed(key, Stream::terrain);
      cand.env.iteration = t;
      EAPair probe;
      probe.env = cand.env;
      const terrain::Heightmap map = realize(probe, t);
      cand.scores = score_all(map, derive_seed(key, Stream::pata_ec));
      cand.eligibility = *std::max_element(cand.scores.begin(), cand.scores.end());
      const bool ok = passes_minimal_criterion(cand.eligibility, pc.mc_lower, pc.mc_upper);
      event(t, ok ? "child_pass_mc" : "child_reject_mc", parent_id,
            std::to_string(c) + ":" + format_double(cand.eligibility));
      if (ok) passing.push_back(std::move(cand));
    }
    if (passing.empty()) continue;
    std::vector<std::vector<double>> vecs;
    for (const auto& c : passing) vecs.push_back(pata_ec_vector(c.scores, pc.mc_lower, pc.mc_upper));
    const auto order = pata_ec_rank(vecs, accepted, pc.pata_ec_k);
    for (int k = 0; k < pc.num_admitted && k < static_cast<int>(order.size()); ++k) {
      const Candidate& c = passing[order[static_cast<std::size_t>(k)]];
      EAPair child;
      child.id = next_pair_id_++;
      child.parent_id = parent_id;
      child.created_iteration = t;
      child.origin = "mutation";
      child.env = c.env;
      const std::size_t best = evaluate_candidates(c.scores);
      child.agent = es::make_state(agents[best], config_.es);
      child.score = c.eligibility;
      child.best_score = c.eligibility;
      child.eligibility_score = c.eligibility;
      accepted.push_back(vecs[order[static_cast<std::size_t>(k)]]);
      event(t, "admit", child.id, "parent=" + std::to_string(parent_id) + ";eligibility=" + format_double(c.eligibility));
      flag(child.id, "mutated");
      admitted.push_back(std::move(child));
    }
  }
  for (auto& c : admitted) pairs_.push_back(std::move(c));
  retire_oldest(t);
}

inline void Engine::transfer_round(std::int64_t t, const std::vector<terrain::Heightmap>& maps) {
  event(t, "transfer_round", -1, "pairs=" + std::to_string(pairs_.size()));
  if (pairs_.size() < 2) return;
  std::vector<PolicyParams> snapshot;
  for (const auto& p : pairs_) snapshot.push_back(p.agent.theta);
  const std::size_t n = pairs_.size();
  // scores[m * n + k]: agent k on environment m.
  auto scores = pool_.map(n * n, [&](std::size_t job) {
    const std::size_t m = job / n, k = job % n;
    if (m == k) return -std::numeric_limits<double>::infinity();
    return score_once(snapshot[k], maps[m],
                      derive_seed(config_.seed, Stream::transfer,
                                  {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(pairs_[m].id)}));
  });
  for (std::size_t m = 0; m < n; ++m) {
    std::vector<double> cand(scores.begin() + static_cast<std::ptrdiff_t>(m * n),
                             scores.begin() + static_cast<std::ptrdiff_t>((m + 1) * n));
    const std::size_t k = evaluate_candidates(cand);
    EAPair& p = pairs_[m];
    if (should_replace(cand[k], p.score)) {
      event(t, "transfer", p.id,
            "from=" + std::to_string(pairs_[k].id) + ";score=" + format_double(cand[k]) + ";was=" + format_double(p.score));
      p.agent = es::EsState{snapshot[k], p.agent.lr, p.agent.noise_std, AdamState::zeros(snapshot[k].flat.size()),
                            p.agent.steps};
      p.score = cand[k];
      p.best_score = std::max(p.best_score, p.score);
      flag(p.id, "transferred");
    }
  }
}

inline void Engine::refresh_sac_actor(std::int64_t t, const std::vector<terrain::Heightmap>& maps) {
  const EAPair* best = best_pair();
  if (!best) return;
  const std::size_t idx = static_cast<std::size_t>(best - pairs_.data());
  const double actor_score =
      score_once(learner_->reshaped_actor(), maps[idx],
                 derive_seed(config_.seed, Stream::transfer, {static_cast<std::uint64_t>(t), ~std::uint64_t{0}}));
  if (should_replace(best->score, actor_score)) {
    learner_->load_from_es(best->agent.theta);
    event(t, "sac_actor_update", best->id, "score=" + format_double(best->score) + ";actor=" + format_double(actor_score));
  }
}

inline bool Engine::inject_sac_actor(std::int64_t t) {
  if (learner_->iterations() < config_.poet.sac_pretrain_iterations) {
    event(t, "inject_skipped", -1, "sac_iterations=" + std::to_string(learner_->iterations()));
    return false;
  }
  const PolicyParams donor = learner_->reshaped_actor();
  require(donor.shape == es_shape(), ErrorKind::structural, "reshaped SAC actor does not have the ES layout");
  Rng rng(derive_seed(config_.seed, Stream::injection, {static_cast<std::uint64_t>(t)}));
  const EAPair& host = pairs_[uniform_index(rng, pairs_.size())];

  EAPair fresh;
  fresh.id = next_pair_id_++;
  fresh.parent_id = host.id;
  fresh.created_iteration = t;
  fresh.origin = "sac";
  fresh.env = host.env;
  fresh.agent = es::make_state(donor, config_.es);
  fresh.score = score_once(donor, realize(fresh, t),
                           derive_seed(config_.seed, Stream::injection, {static_cast<std::uint64_t>(t), 1}));
  fresh.best_score = fresh.score;
  event(t, "inject", fresh.id, "host=" + std::to_string(host.id) + ";score=" + format_double(fresh.score));

  // Crossover of the donor into every other pair.
  std::vector<terrain::Heightmap> maps = realize_all(t);
  std::vector<PolicyParams> thetas;
  for (const auto& p : pairs_) thetas.push_back(p.agent.theta);
  auto eval_seed = [&](std::size_t m) {
    return derive_seed(config_.seed, Stream::crossover_eval,
                       {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(pairs_[m].id)});
  };
  auto results = pool_.map(pairs_.size(), [&](std::size_t m) {
    const CoinFn coin = seeded_coin(derive_seed(config_.seed, Stream::crossover_coin,
                                                {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(pairs_[m].id)}));
    return crossover_pair(
        thetas[m], donor, [&](const PolicyParams& p) { return score_once(p, maps[m], eval_seed(m)); }, coin);
  });
  for (std::size_t m = 0; m < pairs_.size(); ++m) {
    EAPair& p = pairs_[m];
    const CrossoverOutcome& r = results[m];
    if (r.replaced) {
      agent_archive_.push_back({p.id, t, "crossover", p.agent.theta});
      p.agent = es::EsState{r.offspring, p.agent.lr, p.agent.noise_std, AdamState::zeros(r.offspring.flat.size()),
                            p.agent.steps};
      p.score = r.new_return;
      p.best_score = std::max(p.best_score, p.score);
      flag(p.id, "crossed");
    }
    event(t, r.replaced ? "crossover_replace" : "crossover_keep", p.id,
          "old=" + format_double(r.old_return) + ";new=" + format_double(r.new_return));
  }

  flag(fresh.id, "injected");
  pairs_.push_back(std::move(fresh));
  retire_oldest(t);
  return true;
}

}  // namespace epoet::poet
