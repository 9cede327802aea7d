#include <cmath>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "weedout/errors.hpp"
#include "weedout/search.hpp"

using namespace weedout;

namespace {

NetworkSpec small_spec() {
    return {{16}, {LayerSpec::dense(24), LayerSpec::relu(), LayerSpec::dense(12), LayerSpec::relu(),
                   LayerSpec::dense(10, false)}};
}

const Dataset& validation_set() {
    static const Dataset ds = synthetic_blobs(10, 30, 16, 0.8, 21);
    return ds;
}

Batch whole(const Dataset& ds) {
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return gather(ds, idx);
}

Candidate scored(std::uint64_t id, double f) {
    Candidate c;
    c.id = id;
    c.fitness = f;
    return c;
}

SearchConfig small_config(std::size_t m, std::size_t g) {
    SearchConfig cfg;
    cfg.population_size = m;
    cfg.generations = g;
    cfg.eta = SparsityRatio(0.5);
    cfg.validation_batch_size = 64;
    return cfg;
}

}  // namespace

TEST_CASE("fitness of uniform logits is -ln(classes)") {
    const NetworkSpec spec = small_spec();
    Network net = init_network(spec, 3);
    net.params[4].weights = Tensor(net.params[4].weights.shape());
    net.params[4].bias = Tensor(net.params[4].bias.shape());
    const Batch batch = whole(validation_set());
    for (std::uint64_t s = 0; s < 5; ++s) {
        const MaskSet mask = sample_structured(spec, SparsityRatio(0.5), s);
        CHECK(std::abs(fitness_of(net, mask, batch) + std::log(10.0)) < 1e-9);
    }
    CHECK_THROWS_AS(fitness_of(net, MaskSet::ones(spec), Batch{}), InvalidArgument);
}

TEST_CASE("all-ones fitness equals the dense negative loss") {
    const NetworkSpec spec = small_spec();
    const Network net = init_network(spec, 4);
    const Batch batch = whole(validation_set());
    const MaskSet ones = MaskSet::ones(spec);
    CHECK(fitness_of(net, ones, batch) == -loss_and_grads(net, ones, batch.inputs, batch.labels).loss);
    const oracle::Reference<long double> ref(net, ones);
    CHECK(std::abs(fitness_of(net, ones, batch) + static_cast<double>(ref.loss(batch.inputs, batch.labels))) < 1e-12);

    Candidate c;
    c.mask = ones;
    CHECK(fitness(net, c, batch) == *c.fitness);
}

TEST_CASE("population scores do not depend on the thread count") {
    const NetworkSpec spec = small_spec();
    const Network net = init_network(spec, 5);
    CandidateFactory factory(spec, SparsityRatio(0.4), MaskMode::structured, RngStream(9));
    std::vector<Candidate> a;
    for (int i = 0; i < 13; ++i) a.push_back(factory.make(1));
    std::vector<Candidate> b = a;
    const Batch batch = whole(validation_set());
    evaluate_population(net, a, batch, 1);
    evaluate_population(net, b, batch, 4);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].fitness == *b[i].fitness);
}

TEST_CASE("select_best") {
    std::vector<Candidate> pop{scored(0, -2.3), scored(1, -1.9), scored(2, -2.1)};
    CHECK(select_best(pop) == 1);

    SUBCASE("ties go to the lowest id") {
        std::vector<Candidate> tied{scored(5, -1.0), scored(2, -1.0), scored(7, -1.0)};
        CHECK(select_best(tied) == 1);
    }
    SUBCASE("invariant to a common shift") {
        RngStream rng(2);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<Candidate> p;
            for (std::uint64_t i = 0; i < 20; ++i) p.push_back(scored(i, -3.0 * rng.uniform()));
            std::vector<Candidate> shifted = p;
            for (auto& c : shifted) *c.fitness += 0.75;
            const std::size_t best = select_best(p);
            CHECK(select_best(shifted) == best);
            for (const auto& c : p) CHECK(*p[best].fitness >= *c.fitness);
        }
    }
    SUBCASE("unscored candidates are rejected") {
        pop.push_back(Candidate{});
        CHECK_THROWS_AS(select_best(pop), EvaluationIncomplete);
        CHECK_THROWS_AS(select_best(std::vector<Candidate>{}), InvalidArgument);
    }
}

TEST_CASE("next generation keeps the elite and draws fresh masks") {
    const NetworkSpec spec = small_spec();
    CandidateFactory factory(spec, SparsityRatio(0.5), MaskMode::structured, RngStream(11));
    std::vector<Candidate> pop{factory.make(1), factory.make(1)};
    pop[0].fitness = -2.0;
    pop[1].fitness = -1.0;
    const auto next = next_generation(pop, pop[1], factory, 2);
    REQUIRE(next.size() == 2);
    CHECK(next[0].mask == pop[1].mask);
    CHECK(next[0].id == pop[1].id);
    CHECK_FALSE(next[0].fitness.has_value());
    CHECK(next[1].id == 2);
    CHECK(next[1].birth_generation == 2);
    CHECK(next[1].mask != pop[0].mask);
    CHECK(factory.issued() == 3);

    // Fresh masks are a function of the stream seed and the id.
    CandidateFactory again(spec, SparsityRatio(0.5), MaskMode::structured, RngStream(11));
    for (int i = 0; i < 3; ++i) {
        const Candidate c = again.make(1);
        if (c.id == 2) CHECK(c.mask == next[1].mask);
        if (c.id == 0) CHECK(c.mask == pop[0].mask);
    }

    RandomSearch rs;
    CHECK(rs.name() == "random_search");
    const auto via_strategy = rs.next_generation(pop, 1, again, 2);
    CHECK(via_strategy[0].mask == pop[1].mask);
}

TEST_CASE("one generation returns the population argmax") {
    const NetworkSpec spec = small_spec();
    const Network net = init_network(spec, 6);
    const SearchConfig cfg = small_config(12, 1);
    const RngStream rng(14);
    const SearchResult r = run_search(net, cfg, validation_set(), rng);

    CandidateFactory factory(spec, cfg.eta, cfg.mode, rng);
    RngStream batch_rng = rng.split("validation-batches").split(1);
    const Batch batch = sample_batch(validation_set(), cfg.validation_batch_size, batch_rng);
    double best = -INFINITY;
    std::uint64_t best_id = 0;
    for (int i = 0; i < 12; ++i) {
        const Candidate c = factory.make(1);
        const double f = fitness_of(net, c.mask, batch);
        if (f > best) best = f, best_id = c.id;
    }
    CHECK(r.best.id == best_id);
    CHECK(*r.best.fitness == best);
    CHECK(r.evaluations == 12);
    CHECK(r.generations_run == 1);
}

TEST_CASE("five generations of search") {
    const NetworkSpec spec = small_spec();
    const Network net = init_network(spec, 7);
    const SearchConfig cfg = small_config(10, 5);
    const SearchResult r = run_search(net, cfg, validation_set(), RngStream(15));
    CHECK(r.history.size() == 50);
    CHECK(r.evaluations == 50);
    CHECK(r.generations_run == 5);

    std::set<std::uint64_t> ids;
    for (std::size_t g = 1; g <= 5; ++g) {
        double best = -INFINITY;
        int elites = 0;
        const HistoryRow* elite = nullptr;
        for (const HistoryRow& row : r.history) {
            if (row.generation != g) continue;
            best = std::max(best, row.fitness);
            ids.insert(row.candidate_id);
            if (row.is_elite) ++elites, elite = &row;
        }
        CHECK(elites == 1);
        REQUIRE(elite != nullptr);
        CHECK(elite->fitness == best);
        CHECK(best_fitness_per_generation(r.history)[g - 1] == best);
    }
    // 10 initial candidates plus 9 fresh ones per later generation.
    CHECK(ids.size() == 10 + 4 * 9);
    for (const HistoryRow& row : r.history) {
        if (row.generation == 5 && row.is_elite) CHECK(row.candidate_id == r.best.id);
    }

    // The previous winner reappears first in the next generation.
    for (std::size_t g = 2; g <= 5; ++g) {
        std::uint64_t prev = 0;
        for (const HistoryRow& row : r.history) {
            if (row.generation == g - 1 && row.is_elite) prev = row.candidate_id;
        }
        const auto first = std::find_if(r.history.begin(), r.history.end(),
                                        [g](const HistoryRow& row) { return row.generation == g; });
        CHECK(first->candidate_id == prev);
    }

    const SearchResult again = run_search(net, cfg, validation_set(), RngStream(15), 3);
    CHECK(again.history == r.history);
    CHECK(again.best.mask == r.best.mask);
}

TEST_CASE("winner scope") {
    const NetworkSpec spec = small_spec();
    const Network net = init_network(spec, 8);
    SearchConfig cfg = small_config(6, 4);
    const SearchResult last = run_search(net, cfg, validation_set(), RngStream(16));
    cfg.winner_scope = WinnerScope::all_generations;
    const SearchResult overall = run_search(net, cfg, validation_set(), RngStream(16));
    double best = -INFINITY;
    for (const HistoryRow& row : overall.history) best = std::max(best, row.fitness);
    CHECK(*overall.best.fitness == best);
    const auto per_gen = best_fitness_per_generation(last.history);
    CHECK(*last.best.fitness == per_gen.back());
}

TEST_CASE("convergence stops early") {
    const NetworkSpec spec = small_spec();
    const Network net = init_network(spec, 9);
    SearchConfig cfg = small_config(4, 50);
    cfg.convergence = {true, 1e9, 2};  // no generation can improve by 1e9
    const SearchResult r = run_search(net, cfg, validation_set(), RngStream(17));
    CHECK(r.generations_run == 3);
    CHECK(r.evaluations == 12);
    cfg.convergence.enabled = false;
    CHECK(run_search(net, cfg, validation_set(), RngStream(17)).generations_run == 50);
}

TEST_CASE("search configuration checks") {
    const Network net = init_network(small_spec(), 1);
    SearchConfig cfg = small_config(1, 1);
    CHECK_THROWS_AS(run_search(net, cfg, validation_set(), RngStream(1)), InvalidArgument);
    cfg = small_config(4, 0);
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = small_config(4, 1);
    cfg.budget = SparsityBudget::global;
    CHECK_THROWS_AS(cfg.validate(), NotImplemented);
    CHECK_THROWS_AS(search_strategy_from_string("binary_tournament"), NotImplemented);
    CHECK_THROWS_AS(search_strategy_from_string("annealing"), InvalidArgument);
    CHECK(winner_scope_from_string("all_generations") == WinnerScope::all_generations);
}

TEST_CASE("search history csv round trip") {
    const Network net = init_network(small_spec(), 2);
    const SearchResult r = run_search(net, small_config(5, 3), validation_set(), RngStream(3));
    const std::string text = history_csv(r.history);
    CHECK(text.rfind(std::string(kHistoryHeader) + "\n", 0) == 0);
    CHECK(parse_history_csv(text) == r.history);
    CHECK_THROWS(parse_history_csv("generation,oops\n1,2\n"));
}
