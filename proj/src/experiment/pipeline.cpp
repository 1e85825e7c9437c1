#include "xbias/experiment/pipeline.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>

#include "xbias/annotation/session.hpp"
#include "xbias/core/rounding.hpp"
#include "xbias/core/seed.hpp"
#include "xbias/dataset/manifest.hpp"
#include "xbias/metrics/metrics.hpp"
#include "xbias/tcav/tcav.hpp"

namespace xbias::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& ratio_stages() {
    static const std::vector<std::string> stages = {"split", "train", "evaluate", "explain", "judge", "tcav", "report"};
    return stages;
}

bool RunStatus::any_failed() const {
    return std::any_of(ratios.begin(), ratios.end(), [](const RatioStatus& r) { return r.state == "failed"; });
}

bool RunStatus::any_pending() const {
    return std::any_of(ratios.begin(), ratios.end(),
                       [](const RatioStatus& r) { return r.state == "pending_annotation"; });
}

namespace {

class PendingAnnotation : public Error {
public:
    using Error::Error;
};

json records_json(const std::vector<gradcam::ExplanationRecord>& records) {
    json arr = json::array();
    for (const auto& r : records) {
        json j{{"sample_id", r.sample_id},
               {"pred", r.predicted},
               {"correct", r.correct},
               {"no_signal", r.saliency.no_signal},
               {"unjudgeable", r.unjudgeable}};
        if (r.verdict) j["verdict"] = gradcam::to_json(*r.verdict);
        arr.push_back(std::move(j));
    }
    return arr;
}

std::vector<gradcam::ExplanationRecord> records_from_json(const json& arr) {
    std::vector<gradcam::ExplanationRecord> out;
    for (const auto& j : arr) {
        gradcam::ExplanationRecord r;
        r.sample_id = j.at("sample_id").get<std::string>();
        r.predicted = j.at("pred").get<int>();
        r.correct = j.at("correct").get<bool>();
        r.saliency.no_signal = j.value("no_signal", false);
        r.unjudgeable = j.value("unjudgeable", false);
        if (j.contains("verdict")) r.verdict = gradcam::verdict_from_json(j.at("verdict"));
        out.push_back(std::move(r));
    }
    return out;
}

json split_json(const dataset::Split& s, const dataset::Dataset& ds) {
    json counts = json::object();
    for (const auto& [key, n] : s.train_counts) counts[ds.subgroup_label(key)] = n;
    return {{"composition", s.composition_label},
            {"train_ids", s.train_ids},
            {"test_ids", s.test_ids},
            {"train_counts", counts}};
}

struct ConceptAssets {
    std::array<std::vector<tcav::CAV>, 2> runs;
    std::vector<tcav::CAV> random;
};

class Pipeline {
public:
    Pipeline(ResultsStore& store, const ExperimentConfig& cfg, const RunOptions& opts)
        : store_(store), cfg_(cfg), opts_(opts) {}

    RunStatus run() {
        prepare_globals();
        RunStatus status;
        for (const auto& ratio : cfg_.ratios) status.ratios.push_back(run_ratio(ratio));
        return status;
    }

private:
    void log(const std::string& msg) const {
        if (opts_.log) opts_.log(msg);
    }

    std::uint64_t seed(const std::string& scope, const std::string& stage) const {
        return derive_seed(cfg_.seed, scope, stage);
    }

    // ------------------------------------------------------------ globals

    void prepare_globals() {
        load_dataset();
        attributes_ = cfg_.attributes;
        if (attributes_.empty()) attributes_.push_back(ds_.attributes.at(0).name);
        for (const auto& a : attributes_) {
            try {
                ds_.attribute(a);
            } catch (const std::exception&) {
                throw ConfigError(fmt::format("composition.attributes names unknown attribute '{}'", a));
            }
        }
        if (!cfg_.joint && attributes_.size() > 1) {
            throw ConfigError("several composition.attributes require composition.joint = true");
        }

        reserved_ = dataset::reserve_test_split(ds_, cfg_.test_fraction, seed("global", "test"));
        if (!store_.exists("global/test_split.json")) {
            store_.write_json("global/test_split.json",
                              {{"per_subgroup", reserved_.per_subgroup}, {"test_ids", reserved_.test_ids}});
        }
        load_extractor();
        log("caching extractor features");
        cache_ = training::compute_features(extractor_, ds_);
        if (cfg_.tcav_enabled) load_concepts();
    }

    void load_dataset() {
        if (!store_.stage_done("global", "dataset")) {
            log("building dataset");
            dataset::Dataset ds;
            json info;
            if (cfg_.dataset_source == "synthetic") {
                ds = dataset::generate_synthetic_dataset(cfg_.synthetic);
            } else {
                auto imported = dataset::import_dataset(cfg_.import_root, cfg_.import_manifest);
                for (const auto& w : imported.warnings) log("warning: " + w);
                info["maskless"] = imported.maskless_ids;
                info["warnings"] = imported.warnings;
                ds = std::move(imported.dataset);
            }
            dataset::export_dataset(ds, store_.claim("dataset"));
            info["samples"] = ds.samples.size();
            store_.mark_done("global", "dataset", info);
        }
        ds_ = dataset::import_dataset(store_.path("dataset"), store_.path("dataset/manifest.json")).dataset;
    }

    void load_extractor() {
        if (!store_.stage_done("global", "extractor")) {
            log("pretraining feature extractor");
            auto net = training::build_extractor(cfg_.extractor, seed("global", "extractor"));
            const auto report = training::pretrain_extractor(net, cfg_.pretrain);
            nn::save_checkpoint(store_.claim("global/extractor.ckpt"), net);
            store_.mark_done("global", "extractor",
                             {{"initial_loss", report.initial_loss},
                              {"final_loss", report.final_loss},
                              {"checksum", fmt::format("{:016x}", net.extractor_checksum())}});
        }
        extractor_ = nn::load_checkpoint(store_.path("global/extractor.ckpt"));
        if (extractor_.frozen_layers != extractor_.size()) throw StageError("stored extractor is not frozen");
    }

    void load_concepts() {
        if (!store_.stage_done("global", "concepts")) {
            std::vector<dataset::ConceptSet> sets;
            if (cfg_.concepts_dir.empty()) {
                sets = dataset::generate_synthetic_concepts(cfg_.synthetic, cfg_.concept_examples,
                                                            seed("global", "concepts"));
            } else {
                sets = dataset::read_concepts(cfg_.concepts_dir);
            }
            dataset::write_concepts(store_.claim("concepts"), sets);
            store_.mark_done("global", "concepts", {{"concepts", sets.size()}});
        }
        concepts_ = dataset::read_concepts(store_.path("concepts"));
    }

    const ConceptAssets& concept_assets(const std::string& attribute) {
        if (auto it = assets_.find(attribute); it != assets_.end()) return it->second;
        const auto li = extractor_.index_of(cfg_.tcav_layer);
        if (li >= extractor_.frozen_layers) throw ConfigError("tcav.layer must belong to the frozen extractor");
        const auto& spec = ds_.attribute(attribute);
        ConceptAssets assets;
        std::vector<tcav::Vector> pool;
        std::size_t cardinality = 0;
        json meta = json::array();
        for (int i = 0; i < 2; ++i) {
            const auto it = std::find_if(concepts_.begin(), concepts_.end(), [&](const dataset::ConceptSet& c) {
                return c.attribute == attribute && c.instance == spec.instances[i];
            });
            if (it == concepts_.end()) {
                throw StageError(fmt::format("no concept set for {}={}", attribute, spec.instances[i]));
            }
            log(fmt::format("training CAVs for {}", it->name));
            const auto acts = tcav::concept_activations(extractor_, li, *it);
            assets.runs[i] = tcav::train_cav_runs(acts, cfg_.tcav_layer, cfg_.tcav_runs, seed("global", "cav:" + it->name));
            pool.insert(pool.end(), acts.negatives.begin(), acts.negatives.end());
            cardinality = std::max(cardinality, acts.positives.size());
            for (const auto& cav : assets.runs[i]) {
                meta.push_back({{"concept", cav.concept_name}, {"seed", cav.seed}, {"accuracy", cav.accuracy}});
            }
        }
        assets.random = tcav::train_random_runs(pool, cardinality, cfg_.tcav_layer, cfg_.tcav_runs,
                                                seed("global", "random:" + attribute));
        for (const auto& cav : assets.random) {
            meta.push_back({{"concept", cav.concept_name}, {"seed", cav.seed}, {"accuracy", cav.accuracy}});
        }
        const std::string rel = "global/cavs_" + attribute + ".json";
        if (!store_.exists(rel)) store_.write_json(rel, {{"layer", cfg_.tcav_layer}, {"runs", meta}});
        return assets_.emplace(attribute, std::move(assets)).first->second;
    }

    // ------------------------------------------------------------- ratios

    RatioStatus run_ratio(const dataset::Ratio& ratio) {
        RatioStatus st;
        st.ratio = ratio.label;
        const auto& stages = ratio_stages();
        const auto until = std::find(stages.begin(), stages.end(), opts_.until);
        if (until == stages.end()) throw ConfigError("unknown stage '" + opts_.until + "'");
        const std::string dir = ResultsStore::scope_dir(ratio.label);
        std::string current;
        try {
            for (auto it = stages.begin(); it != std::next(until); ++it) {
                current = *it;
                if (store_.stage_done(ratio.label, current)) continue;
                log(fmt::format("[{}] {}", ratio.label, current));
                run_stage(ratio, current, dir);
                store_.mark_done(ratio.label, current, {{"seed", seed(ratio.label, current)}});
            }
            st.state = std::next(until) == stages.end() ? "complete" : "stopped";
            if (store_.exists(dir + "/failed.json")) fs::remove(store_.path(dir + "/failed.json"));
        } catch (const PendingAnnotation& e) {
            st.state = "pending_annotation";
            log(fmt::format("[{}] waiting for annotation: {}", ratio.label, e.what()));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            st.state = "failed";
            st.failed_stage = current;
            st.error = e.what();
            log(fmt::format("[{}] {} failed: {}", ratio.label, current, e.what()));
            dataset::write_text_file(store_.path(dir + "/failed.json"),
                                     json{{"stage", current}, {"error", st.error}}.dump(2) + "\n");
        }
        return st;
    }

    dataset::Split load_split(const std::string& dir) const {
        const auto j = store_.read_json(dir + "/split.json");
        dataset::Split s;
        s.composition_label = j.at("composition").get<std::string>();
        s.train_ids = j.at("train_ids").get<std::vector<std::string>>();
        s.test_ids = j.at("test_ids").get<std::vector<std::string>>();
        return s;
    }

    training::Model load_model(const std::string& dir) const {
        return training::Model(nn::load_checkpoint(store_.path(dir + "/model.ckpt")));
    }

    std::vector<dataset::CompositionSpec> compositions(const dataset::Ratio& ratio) const {
        std::vector<dataset::CompositionSpec> out;
        for (const auto& a : attributes_) out.push_back({a, ratio});
        return out;
    }

    json parameters() const {
        json p{{"judging", cfg_.judging},
               {"gradcam",
                {{"layer", cfg_.explain.layer},
                 {"tau", cfg_.explain.verdict.threshold},
                 {"mass_quantile", cfg_.explain.verdict.mass_quantile},
                 {"budget_per_subgroup", cfg_.budget},
                 {"upsampling", "bilinear"},
                 {"target", "predicted"}}},
               {"rounding", "half-up, 1 decimal"}};
        if (cfg_.tcav_enabled) {
            p["tcav"] = {{"layer", cfg_.tcav_layer},
                         {"runs", cfg_.tcav_runs},
                         {"alpha", cfg_.alpha},
                         {"test", "welch"},
                         {"random", "random-vs-random from pooled negatives"}};
        }
        return p;
    }

    void run_stage(const dataset::Ratio& ratio, const std::string& stage, const std::string& dir) {
        const std::string& label = ratio.label;
        if (stage == "split") {
            const auto comps = compositions(ratio);
            const auto split = cfg_.joint
                                   ? dataset::compose_joint_split(ds_, reserved_, comps, cfg_.class_train_size, seed(label, "split"))
                                   : dataset::compose_split(ds_, reserved_, comps.front(), cfg_.class_train_size, seed(label, "split"));
            store_.write_json(dir + "/split.json", split_json(split, ds_));
        } else if (stage == "train") {
            const auto split = load_split(dir);
            auto tc = cfg_.train;
            tc.seed = seed(label, "train");
            const auto result = training::train_model(extractor_, ds_, split.train_ids, tc, &cache_);
            if (result.report.extractor_checksum_after != extractor_.extractor_checksum()) {
                throw StageError("extractor parameters changed during training");
            }
            nn::save_checkpoint(store_.claim(dir + "/model.ckpt"), result.model.network());
            store_.write_json(dir + "/train.json",
                              {{"train_accuracy", result.report.train_accuracy},
                               {"final_loss", result.report.final_loss},
                               {"extractor_checksum", fmt::format("{:016x}", result.report.extractor_checksum_after)},
                               {"config", tc.to_json()}});
        } else if (stage == "evaluate") {
            const auto split = load_split(dir);
            const auto model = load_model(dir);
            const auto preds = training::predict_all(model, ds_, split.test_ids, &cache_);
            for (const auto& comp : compositions(ratio)) {
                metrics::CellGrid<double> w{};
                for (int c = 0; c < 2; ++c) {
                    for (int i = 0; i < 2; ++i) w[c][i] = comp.fraction(c, i);
                }
                const auto acc = training::accuracy_from_predictions(ds_, preds, split.test_ids, comp.attribute, w,
                                                                     split.composition_label);
                store_.write_json(dir + "/accuracy_" + comp.attribute + ".json", metrics::to_json(acc));
            }
            json joint = json::object();
            for (const auto& [key, a] : training::joint_accuracy(ds_, preds, split.test_ids)) {
                joint[ds_.subgroup_label(key)] = a;
            }
            store_.write_json(dir + "/accuracy_joint.json", joint);
        } else if (stage == "explain") {
            const auto split = load_split(dir);
            const auto model = load_model(dir);
            std::vector<std::string> ids;
            for (const auto& a : attributes_) {
                const auto picked = gradcam::select_for_examination(ds_, split.test_ids, a, cfg_.budget,
                                                                    seed("global", "examine"));
                ids.insert(ids.end(), picked.begin(), picked.end());
            }
            std::sort(ids.begin(), ids.end());
            ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
            const auto records = gradcam::explain(model.network(), ds_, ids, cfg_.explain, true);
            if (cfg_.write_explanations) {
                const auto out = store_.claim(dir + "/explanations");
                for (const auto& r : records) {
                    gradcam::write_explanation(out, r, ds_.sample(r.sample_id).image, cfg_.explain);
                }
            }
            if (cfg_.judging == "human") {
                for (const auto& a : attributes_) {
                    annotation::SessionOptions so;
                    so.session_id = fmt::format("{}-{}", ResultsStore::scope_dir(label), a);
                    so.budget_per_subgroup = cfg_.budget;
                    so.seed = seed(label, "session:" + a);
                    so.annotators_required = cfg_.annotators_required;
                    so.composition_label = split.composition_label;
                    const auto session = annotation::create_session(records, ds_, a, so);
                    const auto sdir = store_.claim(dir + "/session_" + a);
                    annotation::save_session(sdir, session);
                    annotation::write_overlays(sdir, session, ds_, records);
                }
            }
            store_.write_json(dir + "/records.json", records_json(records));
        } else if (stage == "judge") {
            const auto split = load_split(dir);
            if (cfg_.judging == "auto") {
                const auto records = records_from_json(store_.read_json(dir + "/records.json"));
                for (const auto& a : attributes_) {
                    const auto counts = gradcam::collect_counts(records, ds_, a, split.composition_label);
                    store_.write_json(dir + "/counts_" + a + ".json", metrics::to_json(counts));
                }
            } else {
                std::vector<std::pair<std::string, metrics::BiasCountTable>> done;
                for (const auto& a : attributes_) {
                    const auto session = annotation::load_session(store_.path(dir + "/session_" + a));
                    const auto p = session.progress();
                    if (p.judged < p.total) {
                        throw PendingAnnotation(fmt::format("session {} has {}/{} items judged", session.session_id,
                                                            p.judged, p.total));
                    }
                    done.emplace_back(a, annotation::export_counts(session));
                    const auto agreement = annotation::reconcile(session);
                    json conf = agreement.confusion;
                    store_.write_json(dir + "/agreement_" + a + ".json",
                                      {{"n_both", agreement.n_both}, {"agreement", agreement.agreement},
                                       {"confusion_auto_by_human", conf}});
                }
                for (const auto& [a, counts] : done) {
                    store_.write_json(dir + "/counts_" + a + ".json", metrics::to_json(counts));
                }
            }
        } else if (stage == "tcav") {
            if (!cfg_.tcav_enabled) return;
            const auto split = load_split(dir);
            const auto model = load_model(dir);
            const auto li = model.network().index_of(cfg_.tcav_layer);
            std::array<std::vector<tcav::Vector>, 2> grads;
            for (const auto& id : split.test_ids) {
                const auto& s = ds_.sample(id);
                grads[s.class_label].push_back(
                    tcav::class_gradient(model.network(), li, nn::to_tensor(s.image), s.class_label));
            }
            for (const auto& a : attributes_) {
                const auto& assets = concept_assets(a);
                const auto& spec = ds_.attribute(a);
                metrics::ConceptScoreTable table;
                table.attribute = a;
                table.class_names = ds_.class_names;
                table.instances = spec.instances;
                table.composition_label = split.composition_label;
                json results = json::array();
                for (int c = 0; c < 2; ++c) {
                    for (int i = 0; i < 2; ++i) {
                        const auto r = tcav::tcav_from_runs(grads[c], c, assets.runs[i], assets.random, cfg_.alpha);
                        table.score[c][i] = r.score;
                        table.p_value[c][i] = r.p_value;
                        table.significant[c][i] = r.significant;
                        results.push_back(r.to_json());
                    }
                }
                store_.write_json(dir + "/tcav_" + a + ".json", {{"table", metrics::to_json(table)}, {"results", results}});
            }
        } else if (stage == "report") {
            for (const auto& a : attributes_) {
                const auto acc = metrics::accuracy_table_from_json(store_.read_json(dir + "/accuracy_" + a + ".json"));
                std::optional<metrics::BiasCountTable> counts;
                if (store_.exists(dir + "/counts_" + a + ".json")) {
                    counts = metrics::count_table_from_json(store_.read_json(dir + "/counts_" + a + ".json"));
                }
                std::optional<metrics::ConceptScoreTable> scores;
                if (store_.exists(dir + "/tcav_" + a + ".json")) {
                    scores = metrics::concept_table_from_json(store_.read_json(dir + "/tcav_" + a + ".json").at("table"));
                }
                std::optional<double> tol;
                if (auto it = cfg_.tolerance.find(a); it != cfg_.tolerance.end()) tol = it->second;
                const auto report = metrics::build_report(label, acc, counts ? &*counts : nullptr,
                                                          scores ? &*scores : nullptr, parameters(), tol);
                store_.write_json(dir + "/report_" + a + ".json", metrics::to_json(report));
            }
        }
    }

    ResultsStore& store_;
    const ExperimentConfig& cfg_;
    const RunOptions& opts_;

    dataset::Dataset ds_;
    std::vector<std::string> attributes_;
    dataset::TestReservation reserved_;
    nn::Network extractor_;
    training::FeatureCache cache_;
    std::vector<dataset::ConceptSet> concepts_;
    std::map<std::string, ConceptAssets> assets_;
};

json seeds_json(const ExperimentConfig& cfg) {
    json j = json::object();
    for (const char* g : {"dataset", "test", "extractor", "pretrain", "concepts", "examine"}) {
        j["global"][g] = derive_seed(cfg.seed, "global", g);
    }
    for (const auto& r : cfg.ratios) {
        for (const auto& s : ratio_stages()) j[r.label][s] = derive_seed(cfg.seed, r.label, s);
    }
    return j;
}

} // namespace

ExperimentConfig stored_config(const fs::path& store_root) {
    if (!fs::exists(store_root / "config.ini")) throw ConfigError("no results store at " + store_root.string());
    auto cfg = load_config(store_root / "config.ini");
    cfg.output = store_root;
    cfg.values["experiment.output"] = store_root.string();
    return cfg;
}

RunStatus run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
    if (cfg.output.empty()) throw ConfigError("an output directory is required");
    if (fs::exists(cfg.output) && !fs::is_empty(cfg.output)) {
        throw StoreError(fmt::format("{} already holds results; use resume", cfg.output.string()));
    }
    fs::create_directories(cfg.output);
    ResultsStore store(cfg.output);
    store.write("config.ini", canonical_ini(cfg));
    store.write_json("provenance.json", {{"name", cfg.name},
                                         {"config_hash", config_hash(cfg)},
                                         {"master_seed", cfg.seed},
                                         {"created", annotation::utc_timestamp()}});
    store.write_json("seeds.json", seeds_json(cfg));
    Pipeline pipeline(store, cfg, options);
    auto status = pipeline.run();
    render_tables(cfg.output);
    return status;
}

RunStatus resume_experiment(const fs::path& store_root, const std::optional<ExperimentConfig>& edited,
                            const RunOptions& options) {
    const auto cfg = stored_config(store_root);
    const auto provenance = nlohmann::json::parse(dataset::read_text_file(store_root / "provenance.json"));
    if (provenance.at("config_hash").get<std::string>() != config_hash(cfg)) {
        throw StoreError("stored config.ini does not match its recorded hash");
    }
    if (edited && config_hash(*edited) != config_hash(cfg)) {
        std::string msg = "configuration differs from the stored run:";
        for (const auto& d : config_diff(cfg, *edited)) msg += "\n  " + d;
        throw ConfigError(msg);
    }
    ResultsStore store(store_root);
    Pipeline pipeline(store, cfg, options);
    auto status = pipeline.run();
    render_tables(store_root);
    return status;
}

namespace {

struct RatioArtifacts {
    std::string ratio;
    std::optional<metrics::SubgroupAccuracyTable> acc;
    std::optional<metrics::BiasCountTable> counts;
    std::optional<metrics::ConceptScoreTable> tcav;
    std::optional<metrics::MetricsReport> report;
};

std::string subgroup_header(const std::array<std::string, 2>& classes, const std::array<std::string, 2>& inst,
                            int c, int i, const char* sep) {
    return classes[c] + sep + inst[i];
}

std::string md_row(const std::vector<std::string>& cells) {
    std::string out = "|";
    for (const auto& c : cells) out += " " + c + " |";
    return out + "\n";
}

std::string md_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::string out = md_row(header);
    out += "|";
    for (std::size_t i = 0; i < header.size(); ++i) out += i == 0 ? " --- |" : " ---: |";
    out += "\n";
    for (const auto& r : rows) out += md_row(r);
    return out;
}

std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    auto line = [](const std::vector<std::string>& cells) {
        std::string out;
        for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
        return out + "\n";
    };
    std::string out = line(header);
    for (const auto& r : rows) out += line(r);
    return out;
}

void write_if_changed(const fs::path& path, const std::string& text) {
    if (fs::exists(path) && dataset::read_text_file(path) == text) return;
    dataset::write_text_file(path, text);
}

const char* kUndefined = "\u2014";

} // namespace

void render_tables(const fs::path& store_root) {
    const auto cfg = stored_config(store_root);
    ResultsStore store(store_root);
    std::vector<std::string> attributes = cfg.attributes;
    if (attributes.empty()) {
        const auto manifest = nlohmann::json::parse(dataset::read_text_file(store_root / "dataset/manifest.json"));
        attributes.push_back(dataset::manifest_from_json(manifest).attributes.at(0).name);
    }
    const auto out = store_root / "tables";
    fs::create_directories(out);
    for (const auto& a : attributes) {
        std::vector<RatioArtifacts> rows;
        for (const auto& ratio : cfg.ratios) {
            const auto dir = ResultsStore::scope_dir(ratio.label);
            RatioArtifacts r;
            r.ratio = ratio.label;
            if (store.exists(dir + "/accuracy_" + a + ".json")) {
                r.acc = metrics::accuracy_table_from_json(store.read_json(dir + "/accuracy_" + a + ".json"));
            }
            if (store.exists(dir + "/counts_" + a + ".json")) {
                r.counts = metrics::count_table_from_json(store.read_json(dir + "/counts_" + a + ".json"));
            }
            if (store.exists(dir + "/tcav_" + a + ".json")) {
                r.tcav = metrics::concept_table_from_json(store.read_json(dir + "/tcav_" + a + ".json").at("table"));
            }
            if (store.exists(dir + "/report_" + a + ".json")) {
                r.report = metrics::report_from_json(store.read_json(dir + "/report_" + a + ".json"));
            }
            rows.push_back(std::move(r));
        }

        const metrics::SubgroupAccuracyTable* proto = nullptr;
        for (const auto& r : rows) {
            if (r.acc) proto = &*r.acc;
        }
        if (!proto) continue;
        const auto classes = proto->class_names;
        const auto inst = proto->instances;
        std::vector<std::string> groups, md_groups;
        for (int c = 0; c < 2; ++c) {
            for (int i = 0; i < 2; ++i) {
                groups.push_back(subgroup_header(classes, inst, c, i, "_"));
                md_groups.push_back(subgroup_header(classes, inst, c, i, ", "));
            }
        }

        {
            std::vector<std::string> header{"ratio"}, md_header{"ratio"};
            header.insert(header.end(), groups.begin(), groups.end());
            md_header.insert(md_header.end(), md_groups.begin(), md_groups.end());
            for (auto* h : {&header, &md_header}) {
                h->push_back("Avg");
                h->push_back("w-bias");
            }
            std::vector<std::vector<std::string>> csv, md;
            for (const auto& r : rows) {
                if (!r.acc) continue;
                std::vector<std::string> cells{r.ratio};
                for (int c = 0; c < 2; ++c) {
                    for (int i = 0; i < 2; ++i) cells.push_back(format_1dp(r.acc->accuracy[c][i], ""));
                }
                cells.push_back(format_1dp(r.acc->avg(), ""));
                cells.push_back(format_1dp(r.acc->w_bias(), ""));
                csv.push_back(cells);
                for (auto& x : cells) {
                    if (x.empty()) x = kUndefined;
                }
                md.push_back(cells);
            }
            write_if_changed(out / ("accuracy_" + a + ".csv"), csv_table(header, csv));
            write_if_changed(out / ("accuracy_" + a + ".md"), md_table(md_header, md));
        }

        if (std::any_of(rows.begin(), rows.end(), [](const RatioArtifacts& r) { return r.counts.has_value(); })) {
            std::vector<std::string> md_header{"ratio"}, csv_header{"ratio"};
            md_header.insert(md_header.end(), md_groups.begin(), md_groups.end());
            md_header.push_back("Sum");
            for (const auto& g : groups) {
                csv_header.push_back(g + " incorrect_bias");
                csv_header.push_back(g + " bias");
                csv_header.push_back(g + " examined");
            }
            std::vector<std::vector<std::string>> csv, md;
            for (const auto& r : rows) {
                if (!r.counts) continue;
                std::vector<std::string> mcells{r.ratio}, ccells{r.ratio};
                for (int c = 0; c < 2; ++c) {
                    for (int i = 0; i < 2; ++i) {
                        const auto& cell = r.counts->cells[c][i];
                        mcells.push_back(fmt::format("{}/{}", cell.incorrect_bias, cell.bias));
                        ccells.push_back(std::to_string(cell.incorrect_bias));
                        ccells.push_back(std::to_string(cell.bias));
                        ccells.push_back(std::to_string(cell.examined));
                    }
                }
                const auto total = r.counts->total();
                mcells.push_back(fmt::format("{}/{}", total.incorrect_bias, total.bias));
                md.push_back(mcells);
                csv.push_back(ccells);
            }
            write_if_changed(out / ("counts_" + a + ".csv"), csv_table(csv_header, csv));
            write_if_changed(out / ("counts_" + a + ".md"),
                             md_table(md_header, md) +
                                 "\nCells: incorrect predictions with biased explanation / biased explanations.\n");
        }

        {
            std::vector<std::vector<std::string>> csv, md;
            bool any_undefined = false;
            bool any_flag = false;
            for (const auto& r : rows) {
                if (!r.report) continue;
                csv.push_back({});
                std::string line = metrics::report_csv_row(*r.report);
                std::vector<std::string> cells;
                std::size_t start = 0;
                while (true) {
                    const auto pos = line.find(',', start);
                    cells.push_back(line.substr(start, pos - start));
                    if (pos == std::string::npos) break;
                    start = pos + 1;
                }
                csv.back() = cells;
                for (std::size_t k = 1; k < cells.size(); ++k) {
                    if (cells[k].empty()) {
                        cells[k] = std::string(kUndefined) + "*";
                        any_undefined = true;
                    }
                }
                if (r.report->exceeds_tolerance) {
                    cells[1] += " (!)";
                    any_flag = true;
                }
                md.push_back(cells);
            }
            if (!csv.empty()) {
                auto header_line = metrics::report_csv_header();
                std::vector<std::string> header;
                std::size_t start = 0;
                while (true) {
                    const auto pos = header_line.find(',', start);
                    header.push_back(header_line.substr(start, pos - start));
                    if (pos == std::string::npos) break;
                    start = pos + 1;
                }
                std::string notes;
                if (any_undefined) {
                    notes += "\n* undefined: no examined explanations, or a subgroup without biased explanations.\n";
                }
                if (any_flag) notes += "\n(!) unfairness above the configured tolerance.\n";
                write_if_changed(out / ("metrics_" + a + ".csv"), csv_table(header, csv));
                write_if_changed(out / ("metrics_" + a + ".md"), md_table(header, md) + notes);
            }
        }

        if (cfg.tcav_enabled &&
            std::any_of(rows.begin(), rows.end(), [](const RatioArtifacts& r) { return r.tcav.has_value(); })) {
            std::vector<std::string> header{"ratio"}, md_header{"ratio"};
            header.insert(header.end(), groups.begin(), groups.end());
            md_header.insert(md_header.end(), md_groups.begin(), md_groups.end());
            for (std::size_t k = 0; k < groups.size(); ++k) {
                header.push_back("p_" + groups[k]);
                md_header.push_back("p (" + md_groups[k] + ")");
            }
            header.push_back("M4");
            md_header.push_back("M4");
            std::vector<std::vector<std::string>> csv, md;
            for (const auto& r : rows) {
                if (!r.tcav) continue;
                std::vector<std::string> cells{r.ratio};
                for (int c = 0; c < 2; ++c) {
                    for (int i = 0; i < 2; ++i) cells.push_back(format_1dp(r.tcav->score[c][i], ""));
                }
                for (int c = 0; c < 2; ++c) {
                    for (int i = 0; i < 2; ++i) {
                        const auto& p = r.tcav->p_value[c][i];
                        cells.push_back(p ? fmt::format("{:.4f}", *p) : "");
                    }
                }
                cells.push_back(format_1dp(metrics::metric4(*r.tcav), ""));
                csv.push_back(cells);
                for (auto& x : cells) {
                    if (x.empty()) x = kUndefined;
                }
                md.push_back(cells);
            }
            write_if_changed(out / ("tcav_" + a + ".csv"), csv_table(header, csv));
            write_if_changed(out / ("tcav_" + a + ".md"), md_table(md_header, md));
        }
    }
}

} // namespace xbias::experiment
