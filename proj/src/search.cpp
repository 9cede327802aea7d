#include "weedout/search.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "weedout/csv.hpp"
#include "weedout/errors.hpp"

namespace weedout {

std::string_view to_string(SearchStrategy) {
    return "random_search";
}

SearchStrategy search_strategy_from_string(std::string_view name) {
    if (name == "random_search") return SearchStrategy::random_search;
    if (name == "binary_tournament") throw NotImplemented("strategy 'binary_tournament' is not implemented");
    throw InvalidArgument("unknown search strategy '" + std::string(name) + "'");
}

std::string_view to_string(WinnerScope s) {
    return s == WinnerScope::final_generation ? "final_generation" : "all_generations";
}

WinnerScope winner_scope_from_string(std::string_view name) {
    if (name == "final_generation") return WinnerScope::final_generation;
    if (name == "all_generations") return WinnerScope::all_generations;
    throw InvalidArgument("unknown winner scope '" + std::string(name) + "'");
}

void SearchConfig::validate() const {
    if (population_size < 2) throw InvalidArgument("population size must be at least 2");
    if (generations < 1) throw InvalidArgument("generations must be at least 1");
    if (validation_batch_size < 1) throw InvalidArgument("validation batch size must be at least 1");
    if (convergence.enabled && (convergence.patience < 1 || !(convergence.tolerance >= 0.0))) {
        throw InvalidArgument("convergence needs patience >= 1 and a non-negative tolerance");
    }
    require_supported(budget);
}

double fitness_of(const Network& net, const MaskSet& mask, const Batch& batch) {
    if (batch.labels.empty()) throw InvalidArgument("fitness: empty validation batch");
    return -softmax_cross_entropy_loss(forward(net, mask, batch.inputs), batch.labels);
}

double fitness(const Network& net, Candidate& cand, const Batch& batch) {
    const double f = fitness_of(net, cand.mask, batch);
    cand.fitness = f;
    return f;
}

void evaluate_population(const Network& net, std::span<Candidate> population, const Batch& batch,
                         std::size_t threads) {
    threads = std::clamp<std::size_t>(threads, 1, population.size());
    if (threads == 1) {
        for (Candidate& c : population) fitness(net, c, batch);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> workers;
        for (std::size_t t = 0; t < threads; ++t) {
            workers.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < population.size(); i += threads) fitness(net, population[i], batch);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::size_t select_best(std::span<const Candidate> population) {
    if (population.empty()) throw InvalidArgument("select_best: empty population");
    std::size_t best = 0;
    for (std::size_t i = 0; i < population.size(); ++i) {
        const Candidate& c = population[i];
        if (!c.fitness) throw EvaluationIncomplete("candidate " + std::to_string(c.id) + " has no fitness");
        const Candidate& b = population[best];
        if (*c.fitness > *b.fitness || (*c.fitness == *b.fitness && c.id < b.id)) best = i;
    }
    return best;
}

CandidateFactory::CandidateFactory(const NetworkSpec& spec, SparsityRatio eta, MaskMode mode, const RngStream& rng)
    : spec_(&spec), eta_(eta), mode_(mode), masks_(rng.split("candidate-masks")) {}

Candidate CandidateFactory::make(std::size_t birth_generation) {
    const std::uint64_t id = next_id_++;
    Candidate c;
    c.mask = sample_mask(*spec_, eta_, mode_, masks_.split(id).seed());
    c.id = id;
    c.birth_generation = birth_generation;
    return c;
}

std::vector<Candidate> next_generation(std::span<const Candidate> population, const Candidate& best,
                                       CandidateFactory& factory, std::size_t generation) {
    std::vector<Candidate> next;
    next.reserve(population.size());
    Candidate elite = best;
    elite.fitness.reset();
    next.push_back(std::move(elite));
    while (next.size() < population.size()) next.push_back(factory.make(generation));
    return next;
}

std::vector<Candidate> RandomSearch::next_generation(std::span<const Candidate> population, std::size_t best,
                                                     CandidateFactory& factory, std::size_t generation) const {
    return weedout::next_generation(population, population[best], factory, generation);
}

std::unique_ptr<SelectionStrategy> make_strategy(SearchStrategy s) {
    switch (s) {
        case SearchStrategy::random_search: return std::make_unique<RandomSearch>();
    }
    throw NotImplemented("unknown strategy");
}

SearchResult run_search(const Network& net, const SearchConfig& cfg, const Dataset& validation, const RngStream& rng,
                        std::size_t threads) {
    cfg.validate();
    validation.validate();
    const auto strategy = make_strategy(cfg.strategy);
    CandidateFactory factory(net.spec, cfg.eta, cfg.mode, rng);
    const RngStream batches = rng.split("validation-batches");

    std::vector<Candidate> population;
    population.reserve(cfg.population_size);
    for (std::size_t i = 0; i < cfg.population_size; ++i) population.push_back(factory.make(1));

    SearchResult result;
    std::optional<Candidate> overall;
    double previous_best = 0.0;
    std::size_t stalled = 0;
    for (std::size_t g = 1; g <= cfg.generations; ++g) {
        RngStream batch_rng = batches.split(g);
        const Batch batch = sample_batch(validation, cfg.validation_batch_size, batch_rng);
        evaluate_population(net, population, batch, threads);
        result.evaluations += population.size();
        result.generations_run = g;

        const std::size_t best = select_best(population);
        for (std::size_t i = 0; i < population.size(); ++i) {
            const Candidate& c = population[i];
            result.history.push_back({g, c.id, c.birth_generation, *c.fitness, i == best});
        }
        const Candidate& winner = population[best];
        if (!overall || *winner.fitness > *overall->fitness ||
            (*winner.fitness == *overall->fitness && winner.id < overall->id)) {
            overall = winner;
        }
        result.best = winner;

        const double best_fitness = *winner.fitness;
        const bool last = g == cfg.generations;
        if (cfg.convergence.enabled && g > 1) {
            stalled = best_fitness - previous_best < cfg.convergence.tolerance ? stalled + 1 : 0;
            if (stalled >= cfg.convergence.patience) break;
        }
        previous_best = best_fitness;
        if (!last) population = strategy->next_generation(population, best, factory, g + 1);
    }
    if (cfg.winner_scope == WinnerScope::all_generations) result.best = *overall;
    return result;
}

std::string history_csv(std::span<const HistoryRow> rows) {
    std::string out(kHistoryHeader);
    out += '\n';
    for (const HistoryRow& r : rows) {
        out += std::to_string(r.generation) + ',' + std::to_string(r.candidate_id) + ',' +
               std::to_string(r.birth_generation) + ',' + csv::format_double(r.fitness) + ',' +
               (r.is_elite ? "1" : "0") + '\n';
    }
    return out;
}

std::vector<HistoryRow> parse_history_csv(std::string_view text) {
    std::vector<HistoryRow> rows;
    for (const auto& f : csv::parse(text, kHistoryHeader)) {
        rows.push_back({std::stoull(f[0]), std::stoull(f[1]), std::stoull(f[2]), csv::parse_double(f[3]),
                        f[4] == "1"});
    }
    return rows;
}

std::vector<double> best_fitness_per_generation(std::span<const HistoryRow> rows) {
    std::vector<double> best;
    for (const HistoryRow& r : rows) {
        if (r.generation == 0) continue;
        if (best.size() < r.generation) best.resize(r.generation, -INFINITY);
        best[r.generation - 1] = std::max(best[r.generation - 1], r.fitness);
    }
    return best;
}

}  // namespace weedout
