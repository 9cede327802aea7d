#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "weedout/data.hpp"
#include "weedout/network.hpp"
#include "weedout/sparsity.hpp"

namespace weedout {

/// One sparse sub-network in the search population.
struct Candidate {
    MaskSet mask;
    std::optional<double> fitness;
    std::uint64_t id = 0;
    std::size_t birth_generation = 0;
};

enum class SearchStrategy { random_search };
enum class WinnerScope { final_generation, all_generations };

std::string_view to_string(SearchStrategy s);
SearchStrategy search_strategy_from_string(std::string_view name);
std::string_view to_string(WinnerScope s);
WinnerScope winner_scope_from_string(std::string_view name);

/// Optional early stop: halt once the generation-best fitness has improved
/// by less than `tolerance` for `patience` consecutive generations.
struct ConvergenceCriterion {
    bool enabled = false;
    double tolerance = 1e-4;
    std::size_t patience = 2;
};

struct SearchConfig {
    std::size_t population_size = 100;
    std::size_t generations = 5;
    SparsityRatio eta{0.0};
    MaskMode mode = MaskMode::structured;
    SparsityBudget budget = SparsityBudget::per_layer;
    std::size_t validation_batch_size = 256;
    SearchStrategy strategy = SearchStrategy::random_search;
    WinnerScope winner_scope = WinnerScope::final_generation;
    ConvergenceCriterion convergence;

    void validate() const;
};

/// Negative mean cross-entropy of the masked, untrained network on `batch`.
double fitness_of(const Network& net, const MaskSet& mask, const Batch& batch);

/// fitness_of, stored on the candidate.
double fitness(const Network& net, Candidate& cand, const Batch& batch);

/// Scores every candidate on the same batch. Results do not depend on
/// `threads`: each candidate's score is a pure function of its mask.
void evaluate_population(const Network& net, std::span<Candidate> population, const Batch& batch,
                         std::size_t threads = 1);

/// Index of the fittest candidate, ties to the lowest id. Throws
/// EvaluationIncomplete if any fitness is unset.
std::size_t select_best(std::span<const Candidate> population);

/// Issues candidate ids and mask seeds for one search run.
class CandidateFactory {
public:
    CandidateFactory(const NetworkSpec& spec, SparsityRatio eta, MaskMode mode, const RngStream& rng);

    Candidate make(std::size_t birth_generation);
    std::uint64_t issued() const noexcept { return next_id_; }

private:
    const NetworkSpec* spec_;
    SparsityRatio eta_;
    MaskMode mode_;
    RngStream masks_;
    std::uint64_t next_id_ = 0;
};

/// Selection rule applied between generations. Random search is the only
/// shipped strategy; the interface leaves room for tournament-style rules.
class SelectionStrategy {
public:
    virtual ~SelectionStrategy() = default;
    virtual std::string_view name() const = 0;
    virtual std::vector<Candidate> next_generation(std::span<const Candidate> population, std::size_t best,
                                                   CandidateFactory& factory, std::size_t generation) const = 0;
};

/// Elitist random search: the generation's winner plus m-1 fresh random
/// candidates. The winner keeps its mask; its fitness is cleared so it is
/// re-scored on the next generation's batch.
class RandomSearch final : public SelectionStrategy {
public:
    std::string_view name() const override { return "random_search"; }
    std::vector<Candidate> next_generation(std::span<const Candidate> population, std::size_t best,
                                           CandidateFactory& factory, std::size_t generation) const override;
};

std::unique_ptr<SelectionStrategy> make_strategy(SearchStrategy s);

std::vector<Candidate> next_generation(std::span<const Candidate> population, const Candidate& best,
                                       CandidateFactory& factory, std::size_t generation);

struct HistoryRow {
    std::size_t generation = 0;
    std::uint64_t candidate_id = 0;
    std::size_t birth_generation = 0;
    double fitness = 0.0;
    bool is_elite = false;  // selected as this generation's winner

    friend bool operator==(const HistoryRow&, const HistoryRow&) = default;
};

struct SearchResult {
    Candidate best;
    std::vector<HistoryRow> history;
    std::size_t evaluations = 0;
    std::size_t generations_run = 0;
};

/// The search phase. Generations are numbered from 1. Each generation draws
/// a fresh validation batch from `validation`, scores the whole population
/// on it, selects, and replaces. All randomness comes from child streams of
/// `rng`, so the result is a function of rng.seed().
SearchResult run_search(const Network& net, const SearchConfig& cfg, const Dataset& validation, const RngStream& rng,
                        std::size_t threads = 1);

inline constexpr std::string_view kHistoryHeader = "generation,candidate_id,birth_generation,fitness,is_elite";

std::string history_csv(std::span<const HistoryRow> rows);
std::vector<HistoryRow> parse_history_csv(std::string_view text);

/// Best fitness per generation, in generation order.
std::vector<double> best_fitness_per_generation(std::span<const HistoryRow> rows);

}  // namespace weedout
