#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "taal/config.hpp"
#include "taal/experiment.hpp"
#include "taal/plot.hpp"

using namespace taal;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("taal_orch_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string tiny_config_text(const std::string& out, const std::string& name,
                             const std::string& strategy, bool semi, double alpha = 0.75) {
    std::string t;
    t += "dataset.kind = synthetic\n";
    t += "dataset.seed = 5\n";
    t += "dataset.size = 32\n";
    t += "dataset.subjects = 14\n";
    t += "dataset.slices_per_subject = 2\n";
    t += "dataset.noise = 0.04\n";
    t += "dataset.val_images = 4\n";
    t += "dataset.test_subject_fraction = 0.2\n";
    t += "model.profile = custom\n";
    t += "model.depth = 2\n";
    t += "model.base_channels = 2\n";
    t += "model.input_size = 32\n";
    t += "train.epochs = 2\n";
    t += "train.batches_per_epoch = 3\n";
    t += "train.batch_size = 2\n";
    t += "train.base_lr = 2e-5\n";
    t += "train.warmup_epochs = 1\n";
    t += "train.warmup_factor = 50\n";
    t += "train.ramp_length = 1\n";
    t += "train.consistency_k = 2\n";
    t += std::string("train.semi = ") + (semi ? "true" : "false") + "\n";
    t += "train.alpha = " + std::to_string(alpha) + "\n";
    t += "strategy.name = " + strategy + "\n";
    t += "strategy.budget = 2\n";
    t += "al.initial_labeled = 4\n";
    t += "al.cycles = 2\n";
    t += "al.seeds = 3\n";
    t += "run.name = " + name + "\n";
    t += "run.out = " + out + "\n";
    return t;
}

bool records_equal_ignoring_wall(const CycleRecord& a, const CycleRecord& b) {
    return a.cycle == b.cycle && a.seed == b.seed && a.strategy == b.strategy &&
           a.labeled_size == b.labeled_size && a.selected == b.selected && a.scores == b.scores &&
           a.dice2d_mean == b.dice2d_mean && a.dice3d_mean == b.dice3d_mean &&
           a.curve_total == b.curve_total && a.curve_val_dice == b.curve_val_dice &&
           a.config_hash == b.config_hash;
}

}  // namespace

TEST_CASE("config parses, canonicalizes, and hashes stably") {
    auto cfg = parse_config_text(tiny_config_text("/tmp/x", "demo", "tta", true));
    REQUIRE(cfg.model.depth == 2);
    REQUIRE(cfg.strategy == Strategy::Tta);
    REQUIRE(cfg.seeds == std::vector<uint64_t>{3});

    // reparsing the canonical form reproduces the same hash
    auto cfg2 = parse_config_text(canonical_config_text(cfg) + "run.name = demo\nrun.out = /tmp/x\n");
    REQUIRE(config_hash(cfg2) == config_hash(cfg));

    // comments and spacing do not matter
    auto cfg3 = parse_config_text("  dataset.kind =  synthetic  # comment\n" +
                                  tiny_config_text("/tmp/x", "demo", "tta", true));
    REQUIRE(config_hash(cfg3) == config_hash(cfg));

    REQUIRE_THROWS_AS(parse_config_text("bogus.key = 1\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_config_text("dataset.kind\n"), std::invalid_argument);
}

TEST_CASE("the cohort hash ignores the method under test only") {
    auto base = parse_config_text(tiny_config_text("/tmp/x", "a", "tta", true, 0.75));
    auto other_strategy = parse_config_text(tiny_config_text("/tmp/x", "b", "random", true, 0.75));
    auto fully = parse_config_text(tiny_config_text("/tmp/x", "c", "random", false, 0.75));
    auto unweighted = parse_config_text(tiny_config_text("/tmp/x", "d", "tta", true, 0.5));
    REQUIRE(config_hash(base) != config_hash(other_strategy));
    REQUIRE(cohort_hash(base) == cohort_hash(other_strategy));
    REQUIRE(cohort_hash(base) == cohort_hash(fully));
    REQUIRE(cohort_hash(base) == cohort_hash(unweighted));

    auto different_data = tiny_config_text("/tmp/x", "e", "tta", true);
    different_data += "dataset.seed = 6\n";
    REQUIRE(cohort_hash(parse_config_text(different_data)) != cohort_hash(base));
}

TEST_CASE("method labels mirror the benchmark table headers") {
    REQUIRE(method_label(false, 0.75, Strategy::Random) == "RS");
    REQUIRE(method_label(false, 0.75, Strategy::Coreset) == "Coreset");
    REQUIRE(method_label(false, 0.75, Strategy::Entropy) == "Entropy");
    REQUIRE(method_label(false, 0.75, Strategy::Dropout) == "Dropout");
    REQUIRE(method_label(false, 0.75, Strategy::Tta) == "TTA");
    REQUIRE(method_label(true, 0.75, Strategy::Random) == "Semi+RS");
    REQUIRE(method_label(true, 0.5, Strategy::Tta) == "unweighted TAAL");
    REQUIRE(method_label(true, 0.75, Strategy::Tta) == "TAAL");
}

TEST_CASE("cycle records survive the JSON round trip") {
    CycleRecord r;
    r.cycle = 3;
    r.seed = 11;
    r.strategy = "tta";
    r.label = "TAAL";
    r.labeled_size = 14;
    r.selected = {8, 2};
    r.scores = {{8, 0.5}, {2, 0.25}};
    r.dice2d_mean = 0.81;
    r.dice2d_pooled_mean = 0.80;
    r.dice2d_per_class = {{1, 0.7}, {2, 0.9}};
    r.dice3d_mean = 0.85;
    r.dice3d_per_class = {{1, 0.8}, {2, 0.9}};
    r.curve_total = {0.5, 0.4};
    r.curve_val_dice = {0.6, 0.7};
    r.best_epoch = 1;
    r.wall_seconds = 2.5;
    r.config_hash = "abc";
    r.cohort_hash = "def";
    auto back = record_from_json(to_json(r));
    REQUIRE(records_equal_ignoring_wall(back, r));
    REQUIRE(back.wall_seconds == r.wall_seconds);
}

TEST_CASE("zero-cycle experiments run a single training") {
    auto dir = temp_dir("zero");
    auto text = tiny_config_text(dir.string(), "zero", "random", false);
    text += "al.cycles = 0\n";
    auto cfg = parse_config_text(text);
    auto records = run_experiment(cfg);
    REQUIRE(records.size() == 1);
    REQUIRE(records[0].cycle == 0);
    REQUIRE(records[0].selected.empty());
    REQUIRE(records[0].labeled_size == 4);
    fs::remove_all(dir);
}

TEST_CASE("labeled size grows by the budget every cycle") {
    auto dir = temp_dir("budget");
    auto cfg = parse_config_text(tiny_config_text(dir.string(), "bk", "random", false));
    auto records = run_experiment(cfg);
    REQUIRE(records.size() == 3);
    for (size_t k = 0; k < records.size(); ++k)
        REQUIRE(records[k].labeled_size == 4 + static_cast<int>(k) * 2);
    // selections come from the unlabeled pool and land in the next cycle
    REQUIRE(records[0].selected.size() == 2);
    REQUIRE(records[2].selected.empty());
    fs::remove_all(dir);
}

TEST_CASE("replaying a run reproduces records; resume matches uninterrupted") {
    auto dir_a = temp_dir("replay_a");
    auto cfg_a = parse_config_text(tiny_config_text(dir_a.string(), "r", "tta", true));
    auto full = run_experiment(cfg_a);

    auto dir_b = temp_dir("replay_b");
    auto cfg_b = parse_config_text(tiny_config_text(dir_b.string(), "r", "tta", true));
    auto again = run_experiment(cfg_b);
    REQUIRE(full.size() == again.size());
    for (size_t i = 0; i < full.size(); ++i) REQUIRE(records_equal_ignoring_wall(full[i], again[i]));

    // interrupted after cycle 0, then resumed
    auto dir_c = temp_dir("replay_c");
    auto cfg_c = parse_config_text(tiny_config_text(dir_c.string(), "r", "tta", true));
    RunOptions stop;
    stop.stop_after_cycle = 0;
    run_experiment(cfg_c, stop);
    RunOptions resume;
    resume.resume = true;
    auto resumed = run_experiment(cfg_c, resume);
    REQUIRE(resumed.size() == full.size());
    for (size_t i = 0; i < full.size(); ++i) REQUIRE(records_equal_ignoring_wall(resumed[i], full[i]));
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    fs::remove_all(dir_c);
}

TEST_CASE("resume refuses a changed configuration") {
    auto dir = temp_dir("refuse");
    auto cfg = parse_config_text(tiny_config_text(dir.string(), "r", "tta", true));
    RunOptions stop;
    stop.stop_after_cycle = 0;
    run_experiment(cfg, stop);

    auto changed_text = tiny_config_text(dir.string(), "r", "tta", true);
    changed_text += "train.epochs = 3\n";
    auto changed = parse_config_text(changed_text);
    RunOptions resume;
    resume.resume = true;
    REQUIRE_THROWS_AS(run_experiment(changed, resume), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("comparison tables match records and refuse mixed cohorts") {
    auto dir = temp_dir("compare");
    auto cfg = parse_config_text(tiny_config_text(dir.string(), "cmp", "random", false));
    auto records = run_experiment(cfg);
    auto table = compare_strategies(records);
    REQUIRE(table.rows.size() == 1);
    REQUIRE(table.rows[0].label == "RS");
    REQUIRE(table.cycles == 3);
    for (int c = 0; c < 3; ++c) {
        REQUIRE(table.rows[0].mean2d[static_cast<size_t>(c)] ==
                Catch::Approx(records[static_cast<size_t>(c)].dice2d_mean).margin(1e-12));
        REQUIRE(table.rows[0].mean3d[static_cast<size_t>(c)] ==
                Catch::Approx(records[static_cast<size_t>(c)].dice3d_mean).margin(1e-12));
        REQUIRE(table.rows[0].std2d[static_cast<size_t>(c)] == 0.0);  // one seed: zero spread
    }
    // curve endpoints equal the first/last records
    REQUIRE(table.rows[0].mean3d.front() == records.front().dice3d_mean);
    REQUIRE(table.rows[0].mean3d.back() == records.back().dice3d_mean);

    auto mixed = records;
    mixed.push_back(records[0]);
    mixed.back().cohort_hash = "odd";
    REQUIRE_THROWS_AS(compare_strategies(mixed), std::runtime_error);

    // an independent recomputation of the means from raw records
    double m = 0.0;
    for (const auto& r : records) m += r.dice2d_mean;
    m /= static_cast<double>(records.size());
    double m_table = 0.0;
    for (int c = 0; c < 3; ++c) m_table += table.rows[0].mean2d[static_cast<size_t>(c)];
    m_table /= 3.0;
    REQUIRE(m == Catch::Approx(m_table).margin(1e-9));

    auto csv = dir / "table.csv";
    write_compare_csv(table, csv);
    REQUIRE(fs::exists(csv));
    auto final_csv = dir / "final.csv";
    write_final_table_csv(table, final_csv);
    std::ifstream is(final_csv);
    std::string header;
    std::getline(is, header);
    REQUIRE(header.find("RS") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("plots require records and write vector files") {
    auto dir = temp_dir("plot");
    REQUIRE_THROWS_AS(plot_curves({}, dir), std::invalid_argument);
    REQUIRE_FALSE(fs::exists(dir / "dice3d.svg"));

    auto cfg = parse_config_text(tiny_config_text(dir.string(), "pl", "random", false));
    auto records = run_experiment(cfg);
    auto files = plot_curves(records, dir / "plots");
    REQUIRE(files.size() == 2);
    for (const auto& f : files) {
        REQUIRE(fs::exists(f));
        std::ifstream is(f);
        std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        REQUIRE(content.find("<svg") != std::string::npos);
        REQUIRE(content.find("polyline") != std::string::npos);
        REQUIRE(content.find("RS") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("records stream to disk and reload identically") {
    auto dir = temp_dir("stream");
    auto cfg = parse_config_text(tiny_config_text(dir.string(), "st", "entropy", false));
    auto records = run_experiment(cfg);
    auto loaded = load_records(records_path(cfg, 3));
    REQUIRE(loaded.size() == records.size());
    for (size_t i = 0; i < loaded.size(); ++i)
        REQUIRE(records_equal_ignoring_wall(loaded[i], records[i]));

    // scores CSV exists with a header and one line per scored sample
    std::ifstream is(dir / "st_seed3_scores.csv");
    std::string header;
    std::getline(is, header);
    REQUIRE(header == "cycle,strategy,sample_index,score");
    size_t lines = 0;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) ++lines;
    size_t expected = 0;
    for (const auto& r : records) expected += r.scores.size();
    REQUIRE(lines == expected);
    fs::remove_all(dir);
}

#ifdef TAAL_CLI_PATH
TEST_CASE("the command-line front end drives a full round trip") {
    auto dir = temp_dir("cli");
    const std::string cfg_path = (dir / "exp.cfg").string();
    {
        std::ofstream os(cfg_path);
        os << tiny_config_text((dir / "runs").string(), "cli", "random", false);
    }
    const std::string cli = TAAL_CLI_PATH;
    REQUIRE(std::system((cli + " run --config " + cfg_path + " > /dev/null 2>&1").c_str()) == 0);
    REQUIRE(fs::exists(dir / "runs" / "cli_seed3.jsonl"));
    REQUIRE(std::system((cli + " compare --runs " + (dir / "runs").string() + " --out " +
                         (dir / "t.csv").string() + " > /dev/null 2>&1")
                            .c_str()) == 0);
    REQUIRE(fs::exists(dir / "t.csv"));
    REQUIRE(std::system((cli + " plot --runs " + (dir / "runs").string() + " --out " +
                         (dir / "plots").string() + " > /dev/null 2>&1")
                            .c_str()) == 0);
    REQUIRE(fs::exists(dir / "plots" / "dice3d.svg"));
    REQUIRE(std::system((cli + " synth --out " + (dir / "ds").string() +
                         " --subjects 2 --size 16 > /dev/null 2>&1")
                            .c_str()) == 0);
    REQUIRE(fs::exists(dir / "ds" / "manifest.json"));
    // score against the cycle-0 checkpoint
    REQUIRE(std::system((cli + " score --checkpoint " + (dir / "runs" / "cli_seed3_cycle0.ckpt").string() +
                         " --config " + cfg_path + " --strategy entropy --out " +
                         (dir / "s.csv").string() + " > /dev/null 2>&1")
                            .c_str()) == 0);
    REQUIRE(fs::exists(dir / "s.csv"));
    fs::remove_all(dir);
}
#endif
