#include <cmath>
#include <map>

#include "doctest.h"
#include "oracles.hpp"
#include "weedout/errors.hpp"
#include "weedout/pipeline.hpp"

using namespace weedout;

namespace {

NetworkSpec small_spec() {
    return {{12}, {LayerSpec::dense(20), LayerSpec::relu(), LayerSpec::dense(10), LayerSpec::relu(),
                   LayerSpec::dense(4, false)}};
}

const Splits& small_splits() {
    static const Splits s = [] {
        SplitSpec spec;
        spec.counts = std::array<std::size_t, 3>{120, 40, 40};
        spec.seed = 2;
        return split(synthetic_blobs(4, 50, 12, 0.6, 8), spec);
    }();
    return s;
}

SearchConfig small_search(double eta) {
    SearchConfig cfg;
    cfg.population_size = 6;
    cfg.generations = 2;
    cfg.eta = SparsityRatio(eta);
    cfg.validation_batch_size = 32;
    return cfg;
}

TrainConfig small_train() {
    TrainConfig t;
    t.epochs = 3;
    t.batch_size = 16;
    t.lr = 0.05;
    t.momentum = 0.9;
    return t;
}

SweepPlan small_plan() {
    SweepPlan plan;
    plan.spec = small_spec();
    plan.etas = {0.0, 0.5};
    plan.arms = {Arm::weedout, Arm::random_baseline};
    plan.seeds = {1, 2};
    plan.search = small_search(0.0);
    plan.train = small_train();
    return plan;
}

std::string file_text(const std::filesystem::path& p) {
    const auto b = oracle::read_text(p);
    return {b.begin(), b.end()};
}

}  // namespace

TEST_CASE("arm names") {
    for (Arm a : {Arm::weedout, Arm::random_baseline, Arm::dense}) CHECK(arm_from_string(to_string(a)) == a);
    CHECK_THROWS_AS(arm_from_string("lottery"), InvalidArgument);
}

TEST_CASE("baseline at eta 0 reproduces the dense run") {
    const RunRecord base = baseline_run(small_spec(), SparsityRatio(0.0), MaskMode::structured, small_train(),
                                        small_splits(), 3);
    const RunRecord dense = dense_run(small_spec(), small_train(), small_splits(), 3);
    CHECK(base.rows == dense.rows);
    CHECK(base.parent_checksum == dense.parent_checksum);
    CHECK(base.active_parameters == small_spec().parameter_count());
    CHECK(base.rows.size() == 3);
    CHECK(base.mask.realized == 0.0);
}

TEST_CASE("arms at the same eta and seed share everything but the mask") {
    const RunRecord w = weedout_run(small_spec(), small_search(0.5), small_train(), small_splits(), 4);
    const RunRecord b = baseline_run(small_spec(), SparsityRatio(0.5), MaskMode::structured, small_train(),
                                     small_splits(), 4);
    CHECK(w.parent_checksum == b.parent_checksum);
    CHECK(w.active_parameters == b.active_parameters);
    CHECK(w.active_parameters < small_spec().parameter_count());
    CHECK(w.mask.realized == b.mask.realized);
    CHECK(w.fitness_evaluations == 12);
    CHECK(w.generations_run == 2);
    CHECK(w.search_history.size() == 12);
    CHECK(w.winner_id.has_value());
    CHECK(b.fitness_evaluations == 0);
    CHECK(b.search_history.empty());
    CHECK_FALSE(b.winner_id.has_value());
    CHECK(w.run_id == "weedout_0.5_4");
    CHECK(b.run_id == "random_baseline_0.5_4");

    SUBCASE("independent parents differ") {
        const RunOptions indep{1, true};
        const RunRecord wi = weedout_run(small_spec(), small_search(0.5), small_train(), small_splits(), 4, indep);
        const RunRecord bi = baseline_run(small_spec(), SparsityRatio(0.5), MaskMode::structured, small_train(),
                                          small_splits(), 4, indep);
        CHECK(wi.parent_checksum != bi.parent_checksum);
        CHECK(parent_seed(4, Arm::weedout, false) == parent_seed(4, Arm::dense, false));
        CHECK(parent_seed(4, Arm::weedout, true) != parent_seed(4, Arm::dense, true));
    }
}

TEST_CASE("runs are deterministic") {
    const RunRecord a = weedout_run(small_spec(), small_search(0.5), small_train(), small_splits(), 5);
    const RunRecord b = weedout_run(small_spec(), small_search(0.5), small_train(), small_splits(), 5, {3, false});
    CHECK(a.rows == b.rows);
    CHECK(a.search_history == b.search_history);
    CHECK(metrics_csv(a) == metrics_csv(b));
    const RunRecord c = weedout_run(small_spec(), small_search(0.5), small_train(), small_splits(), 6);
    CHECK(c.rows != a.rows);
}

TEST_CASE("training metrics") {
    const RunRecord r = dense_run(small_spec(), small_train(), small_splits(), 1);
    for (const EpochRow& row : r.rows) {
        CHECK(row.train_accuracy >= 0.0);
        CHECK(row.train_accuracy <= 1.0);
        CHECK(row.test_accuracy >= 0.0);
        CHECK(row.test_accuracy <= 1.0);
        CHECK(std::isfinite(row.train_loss));
    }
    // The final test accuracy is the evaluate() of the trained network, so
    // retraining by hand gives the same number.
    Network net = init_network(small_spec(), parent_seed(1, Arm::dense, false));
    PhaseTimes times;
    const auto rows = train_and_evaluate(net, MaskSet::ones(small_spec()), small_train(), small_splits(),
                                         RngStream(1).split("train"), times);
    CHECK(rows == r.rows);
    CHECK(evaluate(net, MaskSet::ones(small_spec()), small_splits().test).accuracy == r.final_row().test_accuracy);

    TrainConfig sparse_eval = small_train();
    sparse_eval.eval_every = 2;
    const RunRecord s = dense_run(small_spec(), sparse_eval, small_splits(), 1);
    CHECK(std::isnan(s.rows[0].test_accuracy));
    CHECK(s.rows[1].test_accuracy == r.rows[1].test_accuracy);
    CHECK(s.rows[2].test_accuracy == r.rows[2].test_accuracy);
}

TEST_CASE("metrics csv round trip") {
    const RunRecord r = dense_run(small_spec(), small_train(), small_splits(), 2);
    const std::string text = metrics_csv(r);
    CHECK(text.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
    CHECK(parse_metrics_csv(text) == r.rows);
    CHECK_THROWS(parse_metrics_csv(std::string(kMetricsHeader) + "\n2,0.5,1,0.5,1\n"));
}

TEST_CASE("save and load a run") {
    const auto dir = oracle::scratch_dir("run");
    const RunRecord r = weedout_run(small_spec(), small_search(0.5), small_train(), small_splits(), 7);
    save_run(r, dir / "cell", "{\"name\": \"x\"}");
    CHECK(is_completed_run(dir / "cell"));
    const RunRecord back = load_run(dir / "cell");
    CHECK(back.run_id == r.run_id);
    CHECK(back.rows == r.rows);
    CHECK(back.search_history == r.search_history);
    CHECK(back.winner_id == r.winner_id);
    CHECK(back.parent_checksum == r.parent_checksum);
    CHECK(back.mask.per_layer == r.mask.per_layer);
    CHECK(back.active_parameters == r.active_parameters);
    CHECK(load_run_config(dir / "cell").find("\"name\": \"x\"") != std::string::npos);

    SUBCASE("tampered metrics") {
        auto text = file_text(dir / "cell" / "metrics.csv");
        text[text.size() - 2] = text[text.size() - 2] == '1' ? '2' : '1';
        oracle::write_bytes(dir / "cell" / "metrics.csv", std::vector<std::uint8_t>(text.begin(), text.end()));
        CHECK_THROWS_AS(load_run(dir / "cell"), ChecksumError);
        CHECK_FALSE(is_completed_run(dir / "cell"));
    }
    SUBCASE("tampered manifest") {
        auto text = file_text(dir / "cell" / "manifest.json");
        const auto pos = text.find("\"seed\": 7");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 9, "\"seed\": 8");
        oracle::write_bytes(dir / "cell" / "manifest.json", std::vector<std::uint8_t>(text.begin(), text.end()));
        CHECK_THROWS_AS(load_run(dir / "cell"), ChecksumError);
    }
    SUBCASE("missing manifest") {
        std::filesystem::remove(dir / "cell" / "manifest.json");
        CHECK_FALSE(is_completed_run(dir / "cell"));
        CHECK_THROWS_AS(load_run(dir / "cell"), ChecksumError);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("sweep cells") {
    SweepPlan plan = small_plan();
    plan.etas = {0.0, 0.2, 0.4, 0.6, 0.8};
    plan.seeds = {1, 2, 3, 4, 5};
    CHECK(sweep_cells(plan).size() == 50);
    plan.arms.push_back(Arm::dense);
    const auto cells = sweep_cells(plan);
    CHECK(cells.size() == 55);
    CHECK(cells.back().arm == Arm::dense);
    CHECK(cells.back().eta == 0.0);
    CHECK(cells.front().label() == "weedout_0_1");
    plan.seeds.clear();
    CHECK_THROWS_AS(sweep_cells(plan), InvalidArgument);
}

TEST_CASE("sweep runs, resumes and matches direct runs") {
    const auto dir = oracle::scratch_dir("sweep");
    const SweepPlan plan = small_plan();
    SweepOptions opts;
    opts.dir = dir;
    std::size_t fresh = 0, resumed = 0;
    opts.on_cell = [&](const SweepCell&, const RunRecord&, bool r) { ++(r ? resumed : fresh); };
    const auto first = sweep(plan, small_splits(), opts);
    CHECK(first.size() == 8);
    CHECK(fresh == 8);
    CHECK(resumed == 0);
    for (const auto& rec : first) CHECK(rec.ok);

    std::map<std::string, std::string> before;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        before[e.path().filename().string()] = file_text(e.path() / "manifest.json") + file_text(e.path() / "metrics.csv");
    }
    fresh = resumed = 0;
    const auto second = sweep(plan, small_splits(), opts);
    CHECK(fresh == 0);
    CHECK(resumed == 8);
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        CHECK(before[e.path().filename().string()] ==
              file_text(e.path() / "manifest.json") + file_text(e.path() / "metrics.csv"));
    }
    for (std::size_t i = 0; i < first.size(); ++i) CHECK(second[i].rows == first[i].rows);

    // A single cell equals the direct call.
    SearchConfig cfg = plan.search;
    cfg.eta = SparsityRatio(0.5);
    const RunRecord direct = weedout_run(plan.spec, cfg, plan.train, small_splits(), 2);
    const RunRecord stored = load_run(dir / "weedout_0.5_2");
    CHECK(stored.rows == direct.rows);
    CHECK(stored.search_history == direct.search_history);

    SUBCASE("an incomplete cell is recomputed") {
        std::filesystem::remove(dir / "weedout_0.5_2" / "manifest.json");
        fresh = resumed = 0;
        sweep(plan, small_splits(), opts);
        CHECK(fresh == 1);
        CHECK(resumed == 7);
        CHECK(load_run(dir / "weedout_0.5_2").rows == direct.rows);
    }
    SUBCASE("parallel cells give the same files") {
        const auto dir2 = oracle::scratch_dir("sweep_parallel");
        SweepOptions par = opts;
        par.dir = dir2;
        par.parallel_cells = 3;
        par.threads = 2;
        sweep(plan, small_splits(), par);
        for (const auto& e : std::filesystem::directory_iterator(dir)) {
            const auto name = e.path().filename();
            CHECK(file_text(dir2 / name / "metrics.csv") == file_text(e.path() / "metrics.csv"));
        }
        std::filesystem::remove_all(dir2);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("a failing cell is recorded and the sweep continues") {
    const auto dir = oracle::scratch_dir("sweep_fail");
    SweepPlan plan = small_plan();
    plan.arms = {Arm::random_baseline};
    plan.seeds = {1};
    plan.etas = {0.2, 0.9};  // the width-4 hidden layer has no survivor at 0.9
    plan.spec = {{12}, {LayerSpec::dense(20), LayerSpec::relu(), LayerSpec::dense(4), LayerSpec::relu(),
                        LayerSpec::dense(4, false)}};
    SweepOptions opts;
    opts.dir = dir;
    const auto recs = sweep(plan, small_splits(), opts);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].ok);
    CHECK_FALSE(recs[1].ok);
    CHECK(recs[1].error.find("layer") != std::string::npos);
    CHECK(std::filesystem::exists(dir / recs[1].run_id / "error.txt"));
    CHECK_FALSE(is_completed_run(dir / recs[1].run_id));
    std::filesystem::remove_all(dir);
}

TEST_CASE("hex64") {
    CHECK(hex64(0) == "0000000000000000");
    CHECK(hex64(0xdeadbeefULL) == "00000000deadbeef");
}
