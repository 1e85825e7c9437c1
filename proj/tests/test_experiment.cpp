#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "reference_tables.hpp"
#include "support.hpp"
#include "xbias/annotation/session.hpp"
#include "xbias/dataset/manifest.hpp"
#include "xbias/experiment/config.hpp"
#include "xbias/experiment/pipeline.hpp"
#include "xbias/experiment/store.hpp"
#include "xbias/metrics/metrics.hpp"

using namespace xbias;
using namespace xbias::experiment;
using testing_support::TempDir;

namespace {

const char* kTiny = R"(
[experiment]
name = tiny
ratios = 1:0,1:1
[dataset]
per_subgroup = 16
width = 48
height = 48
glyph_size = 10
marker_size = 10
[composition]
class_train_size = 20
[training]
channels = 4,8,8
pretrain_samples = 80
pretrain_epochs = 1
epochs = 3
[gradcam]
budget = 3
[tcav]
runs = 2
concept_examples = 8
)";

ExperimentConfig tiny(const std::filesystem::path& out, std::vector<std::string> overrides = {}) {
    overrides.push_back("experiment.output=" + out.string());
    overrides.push_back("experiment.seed=1");
    return parse_config(kTiny, overrides);
}

std::string slurp(const std::filesystem::path& p) { return dataset::read_text_file(p); }

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p) << text;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(XBIAS_CLI) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST(Config, DefaultsFilledAndCanonicalRoundTrip) {
    const auto c = parse_config("[experiment]\nname = x\n");
    EXPECT_EQ(c.ratios.size(), 5u);
    EXPECT_EQ(c.ratios[1].label, "3:1");
    EXPECT_EQ(c.budget, 50);
    EXPECT_EQ(c.tcav_runs, 10);
    EXPECT_EQ(c.judging, "auto");
    EXPECT_EQ(c.values.size(), config_schema().size());
    const auto again = parse_config(canonical_ini(c));
    EXPECT_EQ(config_hash(again), config_hash(c));
    EXPECT_TRUE(config_diff(c, again).empty());
}

TEST(Config, OverridesAndDiff) {
    const auto a = parse_config(kTiny);
    const auto b = parse_config(kTiny, {"gradcam.tau=0.6", "experiment.ratios=1:1"});
    EXPECT_DOUBLE_EQ(b.explain.verdict.threshold, 0.6);
    ASSERT_EQ(b.ratios.size(), 1u);
    EXPECT_NE(config_hash(a), config_hash(b));
    const auto diff = config_diff(a, b);
    ASSERT_EQ(diff.size(), 2u);
    EXPECT_NE(diff[0].find("experiment.ratios"), std::string::npos);
    EXPECT_NE(diff[1].find("gradcam.tau: '0.5' -> '0.6'"), std::string::npos);
}

TEST(Config, RejectsBadInput) {
    for (const char* bad : {"[experiment]\nnmae = x\n", "[nosuch]\na = 1\n", "[gradcam]\ntau = 1.5\n",
                            "[gradcam]\ntau = abc\n", "[gradcam]\nbudget = -1\n", "[experiment]\nratios = 1:x\n",
                            "[experiment]\nratios = 1:1,1:1\n", "[experiment]\njudging = human\n",
                            "[tcav]\nruns = 1\n", "[composition]\njoint = true\n", "[dataset]\nsource = web\n",
                            "[training]\nepochs = 0\n", "[experiment]\njudging = crowd\n", "[[broken\n"}) {
        EXPECT_THROW(parse_config(bad), ConfigError) << bad;
    }
    EXPECT_THROW(parse_config("", {"gradcam.tau"}), ConfigError);
    EXPECT_THROW(parse_config("", {"gradcam.nosuch=1"}), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/x.ini"), ConfigError);
    EXPECT_NO_THROW(parse_config("[experiment]\njudging = human\n[annotation]\nserver = true\n"));
}

TEST(Store, WriteOnceAndStageMarkers) {
    TempDir dir;
    ResultsStore s(dir.path());
    s.write("a/b.txt", "one");
    EXPECT_TRUE(s.exists("a/b.txt"));
    EXPECT_EQ(s.read("a/b.txt"), "one");
    EXPECT_THROW(s.write("a/b.txt", "two"), StoreError);
    EXPECT_EQ(s.read("a/b.txt"), "one");
    s.write_json("c.json", {{"k", 1}});
    EXPECT_EQ(s.read_json("c.json")["k"], 1);
    const auto claimed = s.claim("d");
    std::filesystem::create_directories(claimed);
    EXPECT_THROW(s.claim("d"), StoreError);
    EXPECT_FALSE(s.stage_done("ratio_1-0", "train"));
    s.mark_done("ratio_1-0", "train");
    EXPECT_TRUE(s.stage_done("ratio_1-0", "train"));
    EXPECT_EQ(ResultsStore::scope_dir("1:0"), "ratio_1-0");
    EXPECT_EQ(ResultsStore::scope_dir("global"), "global");
}

TEST(Pipeline, TinyRunProducesEveryArtifact) {
    TempDir dir;
    const auto root = dir / "out";
    const auto status = run_experiment(tiny(root));
    ASSERT_EQ(status.ratios.size(), 2u);
    for (const auto& r : status.ratios) EXPECT_EQ(r.state, "complete") << r.ratio << " " << r.error;
    EXPECT_FALSE(status.any_failed());
    for (const char* f : {"config.ini", "provenance.json", "seeds.json", "global/extractor.ckpt",
                          "global/test_split.json", "dataset/manifest.json", "concepts/descriptor.json"}) {
        EXPECT_TRUE(std::filesystem::exists(root / f)) << f;
    }
    for (const char* label : {"1:0", "1:1"}) {
        for (const auto& stage : ratio_stages()) {
            EXPECT_TRUE(ResultsStore(root).stage_done(label, stage)) << label << " " << stage;
        }
        const auto scope = ResultsStore::scope_dir(label);
        const auto counts = metrics::count_table_from_json(
            nlohmann::json::parse(slurp(root / scope / "counts_badge_color.json")));
        for (const auto& row : counts.cells) {
            for (const auto& cell : row) EXPECT_LE(cell.examined, 3);
        }
        EXPECT_NO_THROW(counts.validate());
        const auto report = metrics::report_from_json(
            nlohmann::json::parse(slurp(root / scope / "report_badge_color.json")));
        EXPECT_TRUE(report.unfairness.has_value());
        EXPECT_TRUE(report.m4.has_value());
        EXPECT_EQ(report.parameters["gradcam"]["tau"], 0.5);
    }
    for (const char* t : {"accuracy", "counts", "metrics", "tcav"}) {
        EXPECT_TRUE(std::filesystem::exists(root / "tables" / (std::string(t) + "_badge_color.md"))) << t;
        EXPECT_TRUE(std::filesystem::exists(root / "tables" / (std::string(t) + "_badge_color.csv"))) << t;
    }
    EXPECT_THROW(run_experiment(tiny(root)), StoreError);
}

TEST(Pipeline, SameSeedSameArtifacts) {
    TempDir dir;
    run_experiment(tiny(dir / "a"));
    run_experiment(tiny(dir / "b"));
    for (const char* f : {"ratio_1-0/records.json", "ratio_1-1/counts_badge_color.json",
                          "ratio_1-0/accuracy_badge_color.json", "ratio_1-1/tcav_badge_color.json",
                          "tables/metrics_badge_color.csv", "seeds.json"}) {
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    }
}

TEST(Pipeline, ResumeIsNoOpAndRejectsEditedConfig) {
    TempDir dir;
    const auto root = dir / "out";
    run_experiment(tiny(root));
    const auto before = slurp(root / "ratio_1-0/records.json");
    const auto mtime = std::filesystem::last_write_time(root / "ratio_1-0/model.ckpt");
    const auto again = resume_experiment(root, tiny(root));
    for (const auto& r : again.ratios) EXPECT_EQ(r.state, "complete");
    EXPECT_EQ(slurp(root / "ratio_1-0/records.json"), before);
    EXPECT_EQ(std::filesystem::last_write_time(root / "ratio_1-0/model.ckpt"), mtime);
    try {
        resume_experiment(root, tiny(root, {"gradcam.tau=0.7"}));
        FAIL() << "edited config accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("gradcam.tau"), std::string::npos);
    }
}

TEST(Pipeline, StopAfterStageThenResume) {
    TempDir dir;
    const auto root = dir / "out";
    RunOptions opt;
    opt.until = "train";
    const auto partial = run_experiment(tiny(root), opt);
    for (const auto& r : partial.ratios) EXPECT_EQ(r.state, "stopped");
    EXPECT_TRUE(std::filesystem::exists(root / "ratio_1-0/model.ckpt"));
    EXPECT_FALSE(std::filesystem::exists(root / "ratio_1-0/records.json"));
    const auto full = resume_experiment(root, std::nullopt);
    for (const auto& r : full.ratios) EXPECT_EQ(r.state, "complete");

    TempDir ref;
    run_experiment(tiny(ref / "out"));
    EXPECT_EQ(slurp(root / "ratio_1-1/counts_badge_color.json"), slurp(ref / "out/ratio_1-1/counts_badge_color.json"));
}

TEST(Pipeline, FailingRatioDoesNotStopOthers) {
    TempDir dir;
    const auto root = dir / "out";
    RunOptions opt;
    opt.until = "train";
    run_experiment(tiny(root), opt);
    std::filesystem::remove(root / "ratio_1-0/model.ckpt");
    write_file(root / "ratio_1-0/model.ckpt", "garbage");
    const auto status = resume_experiment(root, std::nullopt);
    ASSERT_EQ(status.ratios.size(), 2u);
    EXPECT_EQ(status.ratios[0].state, "failed");
    EXPECT_EQ(status.ratios[0].failed_stage, "evaluate");
    EXPECT_FALSE(status.ratios[0].error.empty());
    EXPECT_EQ(status.ratios[1].state, "complete");
    EXPECT_TRUE(status.any_failed());
    EXPECT_TRUE(std::filesystem::exists(root / "ratio_1-0/failed.json"));
    EXPECT_TRUE(std::filesystem::exists(root / "ratio_1-1/report_badge_color.json"));
}

TEST(Pipeline, HumanJudgingWaitsForAnnotationsThenCompletes) {
    TempDir dir;
    const auto root = dir / "out";
    const auto cfg = tiny(root, {"experiment.judging=human", "annotation.server=true", "experiment.ratios=1:1"});
    const auto first = run_experiment(cfg);
    ASSERT_EQ(first.ratios.size(), 1u);
    EXPECT_EQ(first.ratios[0].state, "pending_annotation");
    EXPECT_TRUE(first.any_pending());
    const auto sdir = root / "ratio_1-1/session_badge_color";
    auto session = annotation::load_session(sdir);
    EXPECT_EQ(session.items.size(), 12u);
    EXPECT_TRUE(std::filesystem::exists(sdir / "overlays" / (session.items[0].item_id + ".png")));

    EXPECT_EQ(resume_experiment(root, std::nullopt).ratios[0].state, "pending_annotation");
    for (const auto& it : session.items) {
        annotation::VerdictInput v{it.instance == 0, "badge_color", "badge", "rev"};
        if (!v.biased) v.attribute.clear(), v.feature.clear();
        annotation::submit_verdict(session, it.item_id, v, "t");
        annotation::append_log(sdir, session.log.back());
    }
    const auto done = resume_experiment(root, std::nullopt);
    EXPECT_EQ(done.ratios[0].state, "complete");
    const auto counts = metrics::count_table_from_json(
        nlohmann::json::parse(slurp(root / "ratio_1-1/counts_badge_color.json")));
    EXPECT_EQ(counts.total().bias, 6);
    EXPECT_EQ(counts.total().examined, 12);
    EXPECT_TRUE(std::filesystem::exists(root / "ratio_1-1/agreement_badge_color.json"));
}

TEST(Tables, CountsCellsUndefinedMarkersAndNoTcav) {
    TempDir dir;
    const auto root = dir.path();
    auto cfg = parse_config("[experiment]\nratios = 1:0,1:1\n[composition]\nattributes = gender\n[tcav]\nenabled = false\n",
                            {"experiment.output=" + root.string()});
    write_file(root / "config.ini", canonical_ini(cfg));
    for (int k : {0, 2}) {
        const auto& row = reference::kCounts[k];
        const std::string label = row.ratio;
        const auto acc = reference::accuracy_table(reference::kAccuracy[k]);
        auto counts = reference::count_table(row);
        if (k == 2) {
            for (auto& r : counts.cells) {
                for (auto& c : r) c.bias = c.incorrect_bias = 0;
            }
        }
        const auto dirname = ResultsStore::scope_dir(label);
        write_file(root / dirname / "accuracy_gender.json", metrics::to_json(acc).dump());
        write_file(root / dirname / "counts_gender.json", metrics::to_json(counts).dump());
        const auto report = metrics::build_report(label, acc, &counts, nullptr);
        write_file(root / dirname / "report_gender.json", metrics::to_json(report).dump());
    }
    render_tables(root);
    const auto md = slurp(root / "tables/counts_gender.md");
    EXPECT_NE(md.find("| 1:0 | 3/10 | 7/8 | 8/11 | 1/9 | 19/38 |"), std::string::npos) << md;
    EXPECT_NE(md.find("| 1:1 | 0/0 | 0/0 | 0/0 | 0/0 | 0/0 |"), std::string::npos) << md;
    const auto metrics_md = slurp(root / "tables/metrics_gender.md");
    EXPECT_NE(metrics_md.find("| 1:0 | 19.4 | 9.5 | 19.0 | 59.6 |"), std::string::npos) << metrics_md;
    EXPECT_NE(metrics_md.find("\u2014"), std::string::npos);
    EXPECT_NE(metrics_md.find("undefined"), std::string::npos);
    EXPECT_FALSE(std::filesystem::exists(root / "tables/tcav_gender.md"));
    EXPECT_FALSE(std::filesystem::exists(root / "tables/tcav_gender.csv"));
    const auto csv = slurp(root / "tables/counts_gender.csv");
    EXPECT_NE(csv.find("incorrect_bias"), std::string::npos);
    const auto mtime = std::filesystem::last_write_time(root / "tables/counts_gender.md");
    render_tables(root);
    EXPECT_EQ(std::filesystem::last_write_time(root / "tables/counts_gender.md"), mtime);
}

TEST(Cli, ExitCodes) {
    TempDir dir;
    write_file(dir / "t.ini", kTiny);
    const std::string ini = (dir / "t.ini").string();
    const std::string out = (dir / "out").string();
    EXPECT_EQ(run_cli("run --config " + ini + " --seed 2 --out " + out), 0);
    EXPECT_EQ(run_cli("run --config " + ini + " --seed 2 --out " + out), 2);
    EXPECT_EQ(run_cli("resume --store " + out), 0);
    EXPECT_EQ(run_cli("resume --store " + out + " --config " + ini), 0);
    EXPECT_EQ(run_cli("report --store " + out), 0);
    EXPECT_EQ(run_cli("run --config /nonexistent.ini --seed 2 --out " + (dir / "x").string()), 2);
    EXPECT_EQ(run_cli("run --config " + ini + " --seed 2 --out " + (dir / "y").string() + " --set gradcam.tau=9"), 2);
    EXPECT_EQ(run_cli("run --config " + ini), 2);
    EXPECT_EQ(run_cli("bogus"), 2);
    EXPECT_EQ(run_cli("resume --store " + (dir / "missing").string()), 2);

    std::filesystem::remove(dir / "out/ratio_1-0/report.done");
    std::filesystem::remove(dir / "out/ratio_1-0/report_badge_color.json");
    EXPECT_EQ(run_cli("resume --store " + out), 0);

    const std::string bad = (dir / "bad").string();
    EXPECT_EQ(run_cli("run --config " + ini + " --seed 2 --out " + bad + " --stage train"), 0);
    std::filesystem::remove(dir / "bad/ratio_1-1/model.ckpt");
    write_file(dir / "bad/ratio_1-1/model.ckpt", "garbage");
    EXPECT_EQ(run_cli("resume --store " + bad), 3);
}

TEST(Cli, DatasetGenAndImport) {
    TempDir dir;
    const std::string out = (dir / "ds").string();
    EXPECT_EQ(run_cli("dataset gen --out " + out + " --set dataset.per_subgroup=2 --set dataset.width=32 --set dataset.height=32"), 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "ds/manifest.json"));
    EXPECT_EQ(run_cli("dataset import --root " + out), 0);
    std::filesystem::remove(dir / "ds/manifest.json");
    EXPECT_NE(run_cli("dataset import --root " + out), 0);
}
