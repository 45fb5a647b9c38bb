// Command-line front end: run experiments, aggregate and plot results,
// score a pool against a saved checkpoint, and emit synthetic datasets.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "taal/taal.hpp"

namespace {

taal::ExperimentConfig load_with_env(const std::string& path) {
    taal::ExperimentConfig cfg = taal::load_config(path);
    if (const char* out = std::getenv("TAAL_OUT_DIR"); out && *out) cfg.out_dir = out;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TAAL: test-time-augmentation active learning for segmentation"};
    app.require_subcommand(1);

    // run
    std::string run_config;
    bool resume = false;
    auto* run = app.add_subcommand("run", "run an active-learning experiment");
    run->add_option("--config", run_config, "experiment config file")->required();
    run->add_flag("--resume", resume, "continue from the last complete cycle");

    // compare
    std::string cmp_dir, cmp_out, cmp_final;
    auto* cmp = app.add_subcommand("compare", "aggregate runs into a per-cycle table");
    cmp->add_option("--runs", cmp_dir, "directory of run .jsonl files")->required();
    cmp->add_option("--out", cmp_out, "per-cycle CSV output")->required();
    cmp->add_option("--final", cmp_final, "final-cycle summary CSV (strategies as columns)");

    // plot
    std::string plot_dir, plot_out;
    auto* plt = app.add_subcommand("plot", "emit learning-curve SVGs");
    plt->add_option("--runs", plot_dir, "directory of run .jsonl files")->required();
    plt->add_option("--out", plot_out, "output directory")->required();

    // score
    std::string score_ckpt, score_cfg, score_strategy = "tta", score_out = "scores.csv";
    uint64_t score_seed = 0;
    int score_cycle = 0;
    auto* sc = app.add_subcommand("score", "score the unlabeled pool with a checkpoint");
    sc->add_option("--checkpoint", score_ckpt, "model checkpoint")->required();
    sc->add_option("--config", score_cfg, "experiment config (dataset + pool definition)")->required();
    sc->add_option("--strategy", score_strategy, "random|entropy|coreset|dropout|tta");
    sc->add_option("--seed", score_seed, "experiment seed for the initial partition (default: first)");
    sc->add_option("--cycle", score_cycle, "cycle tag for the score export");
    sc->add_option("--out", score_out, "CSV output path");

    // synth
    std::string synth_out;
    uint64_t synth_seed = 1;
    int synth_size = 64, synth_subjects = 60, synth_slices = 4;
    double synth_noise = 0.05;
    auto* sy = app.add_subcommand("synth", "generate a synthetic dataset on disk");
    sy->add_option("--out", synth_out, "output directory")->required();
    sy->add_option("--seed", synth_seed, "generator seed");
    sy->add_option("--size", synth_size, "image side length");
    sy->add_option("--subjects", synth_subjects, "subject count");
    sy->add_option("--slices", synth_slices, "slices per subject");
    sy->add_option("--noise", synth_noise, "intensity noise sigma");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            taal::ExperimentConfig cfg = load_with_env(run_config);
            taal::RunOptions opt;
            opt.resume = resume;
            opt.log = &std::cerr;
            auto records = taal::run_experiment(cfg, opt);
            std::cout << "wrote " << records.size() << " cycle records under " << cfg.out_dir << "\n";
        } else if (*cmp) {
            auto records = taal::load_run_dir(cmp_dir);
            auto table = taal::compare_strategies(records);
            taal::write_compare_csv(table, cmp_out);
            std::cout << "wrote " << cmp_out << "\n";
            if (!cmp_final.empty()) {
                taal::write_final_table_csv(table, cmp_final);
                std::cout << "wrote " << cmp_final << "\n";
            }
        } else if (*plt) {
            auto records = taal::load_run_dir(plot_dir);
            for (const auto& p : taal::plot_curves(records, plot_out))
                std::cout << "wrote " << p.string() << "\n";
        } else if (*sc) {
            taal::ExperimentConfig cfg = load_with_env(score_cfg);
            auto model = taal::UNet<float>::load(score_ckpt);
            taal::Dataset data = taal::build_dataset(cfg);
            const uint64_t seed = (*sc)["--seed"]->count() ? score_seed : cfg.seeds.front();
            taal::PoolPartition part =
                taal::PoolPartition::initial(data.split.train, cfg.initial_labeled, seed);
            taal::StrategyConfig strat = cfg.strategy_config();
            strat.strategy = taal::parse_strategy(score_strategy);
            auto sel = taal::select(
                strat, model, part.labeled, part.unlabeled,
                [&](int idx) -> const taal::Image<float>& {
                    return data.samples[static_cast<size_t>(idx)].image;
                },
                score_cycle, seed);
            std::ofstream os(score_out);
            os << "cycle,strategy,sample_index,score\n";
            for (const auto& s : sel.scores)
                os << score_cycle << "," << score_strategy << "," << s.sample_index << "," << s.score << "\n";
            std::cout << "scored " << sel.scores.size() << " samples; selected:";
            for (int i : sel.indices) std::cout << " " << i;
            std::cout << "\nwrote " << score_out << "\n";
        } else if (*sy) {
            taal::SyntheticConfig scfg;
            scfg.size = synth_size;
            scfg.subjects = synth_subjects;
            scfg.slices_per_subject = synth_slices;
            scfg.noise = synth_noise;
            auto samples = taal::generate_synthetic(scfg, synth_seed);
            taal::write_dataset(synth_out, samples, "synthetic");
            std::cout << "wrote " << samples.size() << " slices to " << synth_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
