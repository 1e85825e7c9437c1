#include "xbias/annotation/session.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "xbias/core/seed.hpp"
#include "xbias/dataset/manifest.hpp"

namespace xbias::annotation {

namespace {

constexpr const char* kAutoAnnotator = "auto";

bool is_auto(const LogEntry& e) { return e.annotator == kAutoAnnotator; }

} // namespace

const SessionItem& AnnotationSession::item(std::string_view item_id) const {
    for (const auto& it : items) {
        if (it.item_id == item_id) return it;
    }
    throw VerdictRejected(fmt::format("unknown item '{}'", item_id));
}

std::vector<const LogEntry*> AnnotationSession::entries(std::string_view item_id) const {
    std::vector<const LogEntry*> out;
    for (const auto& e : log) {
        if (e.item_id == item_id) out.push_back(&e);
    }
    return out;
}

bool AnnotationSession::complete(std::string_view item_id) const {
    const auto es = entries(item_id);
    if (std::any_of(es.begin(), es.end(), [](const LogEntry* e) { return is_auto(*e); })) return true;
    return static_cast<int>(es.size()) >= annotators_required;
}

bool AnnotationSession::unjudgeable(std::string_view item_id) const {
    const auto es = entries(item_id);
    return std::any_of(es.begin(), es.end(), [](const LogEntry* e) { return is_auto(*e) && !e->verdict; });
}

std::optional<gradcam::BiasVerdict> AnnotationSession::resolved(std::string_view item_id) const {
    if (!complete(item_id)) return std::nullopt;
    auto es = entries(item_id);
    for (const auto* e : es) {
        if (is_auto(*e)) return e->verdict;
    }
    es.resize(static_cast<std::size_t>(annotators_required));
    if (es.size() == 1) return es.front()->verdict;

    std::size_t biased = 0;
    std::vector<std::pair<std::string, std::string>> picks;
    for (const auto* e : es) {
        if (e->verdict && e->verdict->biased) {
            ++biased;
            picks.emplace_back(e->verdict->attribute, e->verdict->feature);
        }
    }
    gradcam::BiasVerdict v;
    v.source = gradcam::VerdictSource::human;
    v.annotator = "majority";
    if (2 * biased > es.size()) {
        v.biased = true;
        std::size_t best = 0;
        for (const auto& p : picks) {
            const auto n = static_cast<std::size_t>(std::count(picks.begin(), picks.end(), p));
            if (n > best) {
                best = n;
                std::tie(v.attribute, v.feature) = p;
            }
        }
    }
    return v;
}

Progress AnnotationSession::progress() const {
    Progress p;
    p.total = items.size();
    p.cursor = items.size();
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (complete(items[i].item_id)) {
            ++p.judged;
        } else if (p.cursor == items.size()) {
            p.cursor = i;
        }
    }
    return p;
}

std::optional<std::string> AnnotationSession::next_item(const std::string& annotator) const {
    for (const auto& it : items) {
        if (complete(it.item_id)) continue;
        const auto es = entries(it.item_id);
        if (!annotator.empty() &&
            std::any_of(es.begin(), es.end(), [&](const LogEntry* e) { return e->annotator == annotator; })) {
            continue;
        }
        return it.item_id;
    }
    return std::nullopt;
}

AnnotationSession create_session(std::span<const gradcam::ExplanationRecord> records, const dataset::Dataset& ds,
                                 const std::string& attribute, const SessionOptions& options) {
    if (options.budget_per_subgroup < 0) throw ConfigError("budget must be non-negative");
    if (options.annotators_required < 1) throw ConfigError("annotators_required must be at least 1");
    const auto& spec = ds.attribute(attribute);

    metrics::CellGrid<std::vector<std::pair<std::uint64_t, const gradcam::ExplanationRecord*>>> cells;
    for (const auto& r : records) {
        const auto& s = ds.sample(r.sample_id);
        cells[s.class_label][spec.instance_index(s.attributes.at(attribute))].emplace_back(
            item_priority(options.seed, r.sample_id), &r);
    }
    std::vector<std::string> shortfalls;
    std::vector<const gradcam::ExplanationRecord*> chosen;
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 2; ++i) {
            auto& cell = cells[c][i];
            const auto need = static_cast<std::size_t>(options.budget_per_subgroup);
            if (cell.size() < need) {
                shortfalls.push_back(fmt::format("({}, {}={}) short by {}", ds.class_names[c], attribute,
                                                 spec.instances[i], need - cell.size()));
                continue;
            }
            std::sort(cell.begin(), cell.end(),
                      [](const auto& a, const auto& b) { return std::tie(a.first, a.second->sample_id) < std::tie(b.first, b.second->sample_id); });
            for (std::size_t k = 0; k < need; ++k) chosen.push_back(cell[k].second);
        }
    }
    if (!shortfalls.empty()) {
        std::string msg = "insufficient explanations:";
        for (const auto& s : shortfalls) msg += " " + s;
        throw ValidationError(msg);
    }

    const auto order_seed = derive_seed(options.seed, "annotation", "order");
    std::sort(chosen.begin(), chosen.end(), [&](const auto* a, const auto* b) {
        return std::pair(item_priority(order_seed, a->sample_id), a->sample_id) <
               std::pair(item_priority(order_seed, b->sample_id), b->sample_id);
    });

    AnnotationSession session;
    session.session_id = options.session_id;
    session.attribute = attribute;
    session.class_names = ds.class_names;
    session.instances = spec.instances;
    session.composition_label = options.composition_label;
    session.annotators_required = options.annotators_required;
    session.seed = options.seed;
    for (const auto& a : ds.attributes) session.checklist[a.name] = a.feature_list;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        const auto& r = *chosen[k];
        const auto& s = ds.sample(r.sample_id);
        SessionItem it;
        it.item_id = fmt::format("item-{:04d}", k + 1);
        it.sample_id = r.sample_id;
        it.class_label = s.class_label;
        it.instance = spec.instance_index(s.attributes.at(attribute));
        it.predicted = r.predicted;
        it.correct = r.correct;
        it.auto_verdict = r.verdict;
        it.auto_unjudgeable = r.unjudgeable;
        session.items.push_back(std::move(it));
    }
    return session;
}

Progress submit_verdict(AnnotationSession& session, const std::string& item_id, const VerdictInput& input,
                        const std::string& timestamp) {
    session.item(item_id);
    const std::string annotator = input.annotator.empty() ? "annotator" : input.annotator;
    if (annotator == kAutoAnnotator) throw VerdictRejected("annotator name 'auto' is reserved");

    const auto es = session.entries(item_id);
    if (session.complete(item_id)) {
        throw VerdictRejected(fmt::format("item '{}' already judged", item_id), session.resolved(item_id));
    }
    for (const auto* e : es) {
        if (e->annotator == annotator) {
            throw VerdictRejected(fmt::format("item '{}' already judged by '{}'", item_id, annotator), e->verdict);
        }
    }

    gradcam::BiasVerdict v;
    v.source = gradcam::VerdictSource::human;
    v.annotator = annotator;
    v.biased = input.biased;
    if (input.biased) {
        if (input.feature.empty()) throw VerdictRejected("a biased verdict must name a feature");
        std::string attr = input.attribute;
        if (attr.empty()) {
            for (const auto& [name, features] : session.checklist) {
                if (std::find(features.begin(), features.end(), input.feature) != features.end()) {
                    attr = name;
                    break;
                }
            }
        }
        const auto it = session.checklist.find(attr);
        if (it == session.checklist.end() ||
            std::find(it->second.begin(), it->second.end(), input.feature) == it->second.end()) {
            throw VerdictRejected(fmt::format("feature '{}' is not on the checklist", input.feature));
        }
        v.attribute = attr;
        v.feature = input.feature;
    }
    session.log.push_back({item_id, annotator, timestamp, v});
    return session.progress();
}

void auto_judge(AnnotationSession& session, const std::string& timestamp) {
    for (const auto& it : session.items) {
        if (session.complete(it.item_id)) continue;
        if (!it.auto_verdict && !it.auto_unjudgeable) {
            throw ValidationError(fmt::format("item '{}' has no automatic verdict", it.item_id), {it.sample_id});
        }
        session.log.push_back({it.item_id, kAutoAnnotator, timestamp,
                               it.auto_unjudgeable ? std::nullopt : it.auto_verdict});
    }
}

metrics::BiasCountTable export_counts(const AnnotationSession& session, bool allow_partial) {
    metrics::BiasCountTable t;
    t.attribute = session.attribute;
    t.class_names = session.class_names;
    t.instances = session.instances;
    t.composition_label = session.composition_label;
    std::vector<std::string> pending;
    for (const auto& it : session.items) {
        if (!session.complete(it.item_id)) {
            pending.push_back(it.item_id);
            continue;
        }
        if (session.unjudgeable(it.item_id)) continue;
        const auto v = session.resolved(it.item_id);
        auto& cell = t.cells[it.class_label][it.instance];
        ++cell.examined;
        if (v && v->biased && v->attribute == session.attribute) {
            ++cell.bias;
            cell.incorrect_bias += !it.correct;
        }
    }
    if (!pending.empty() && !allow_partial) {
        throw ValidationError(fmt::format("{} items are not judged yet", pending.size()), pending);
    }
    t.validate();
    return t;
}

AgreementStats reconcile(const std::map<std::string, bool>& human, const std::map<std::string, bool>& automatic) {
    AgreementStats s;
    std::size_t agree = 0;
    for (const auto& [id, h] : human) {
        const auto it = automatic.find(id);
        if (it == automatic.end()) continue;
        ++s.n_both;
        ++s.confusion[it->second][h];
        agree += it->second == h;
    }
    if (s.n_both == 0) throw ValidationError("human and automatic verdicts share no items");
    s.agreement = static_cast<double>(agree) / static_cast<double>(s.n_both);
    return s;
}

AgreementStats reconcile(const AnnotationSession& session) {
    std::map<std::string, bool> human, automatic;
    for (const auto& it : session.items) {
        if (it.auto_verdict) automatic[it.sample_id] = it.auto_verdict->biased;
        const auto es = session.entries(it.item_id);
        const bool by_human = std::any_of(es.begin(), es.end(), [](const LogEntry* e) { return !is_auto(*e); });
        if (by_human && session.complete(it.item_id)) {
            if (const auto v = session.resolved(it.item_id)) human[it.sample_id] = v->biased;
        }
    }
    return reconcile(human, automatic);
}

nlohmann::json item_payload(const AnnotationSession& session, const std::string& item_id) {
    session.item(item_id);
    nlohmann::json checklist = nlohmann::json::array();
    for (const auto& [attr, features] : session.checklist) {
        checklist.push_back({{"attribute", attr}, {"features", features}});
    }
    const auto p = session.progress();
    return {{"item_id", item_id},
            {"overlay_png_url", fmt::format("/sessions/{}/overlays/{}.png", session.session_id, item_id)},
            {"feature_checklist", checklist},
            {"progress", {{"judged", p.judged}, {"total", p.total}}}};
}

nlohmann::json session_meta(const AnnotationSession& session) {
    const auto p = session.progress();
    return {{"session_id", session.session_id},
            {"attribute", session.attribute},
            {"total", p.total},
            {"judged", p.judged},
            {"cursor", p.cursor},
            {"complete", p.judged == p.total},
            {"annotators_required", session.annotators_required},
            {"checklist", session.checklist}};
}

nlohmann::json log_entry_json(const LogEntry& e) {
    nlohmann::json j{{"item_id", e.item_id}, {"annotator", e.annotator}, {"timestamp", e.timestamp}};
    if (e.verdict) {
        j["verdict"] = gradcam::to_json(*e.verdict);
    } else {
        j["unjudgeable"] = true;
    }
    return j;
}

LogEntry log_entry_from_json(const nlohmann::json& j) {
    LogEntry e;
    e.item_id = j.at("item_id").get<std::string>();
    e.annotator = j.at("annotator").get<std::string>();
    e.timestamp = j.value("timestamp", "");
    if (j.contains("verdict")) e.verdict = gradcam::verdict_from_json(j.at("verdict"));
    return e;
}

namespace {

nlohmann::json session_json(const AnnotationSession& s) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& it : s.items) {
        nlohmann::json j{{"item_id", it.item_id}, {"sample_id", it.sample_id},   {"class", it.class_label},
                         {"instance", it.instance}, {"pred", it.predicted},      {"correct", it.correct},
                         {"auto_unjudgeable", it.auto_unjudgeable}};
        if (it.auto_verdict) j["auto_verdict"] = gradcam::to_json(*it.auto_verdict);
        items.push_back(std::move(j));
    }
    return {{"session_id", s.session_id},
            {"attribute", s.attribute},
            {"class_names", s.class_names},
            {"instances", s.instances},
            {"composition", s.composition_label},
            {"checklist", s.checklist},
            {"annotators_required", s.annotators_required},
            {"seed", s.seed},
            {"items", items}};
}

} // namespace

void save_session(const std::filesystem::path& dir, const AnnotationSession& session) {
    std::filesystem::create_directories(dir);
    dataset::write_text_file(dir / "session.json", session_json(session).dump(2) + "\n");
    std::string lines;
    for (const auto& e : session.log) lines += log_entry_json(e).dump() + "\n";
    dataset::write_text_file(dir / "verdicts.jsonl", lines);
}

void append_log(const std::filesystem::path& dir, const LogEntry& entry) {
    std::ofstream out(dir / "verdicts.jsonl", std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot open verdict log in " + dir.string());
    out << log_entry_json(entry).dump() << '\n';
    out.flush();
    if (!out) throw Error("failed to append to verdict log in " + dir.string());
}

AnnotationSession load_session(const std::filesystem::path& dir) {
    const auto j = nlohmann::json::parse(dataset::read_text_file(dir / "session.json"));
    AnnotationSession s;
    s.session_id = j.at("session_id").get<std::string>();
    s.attribute = j.at("attribute").get<std::string>();
    s.class_names = j.at("class_names").get<std::array<std::string, 2>>();
    s.instances = j.at("instances").get<std::array<std::string, 2>>();
    s.composition_label = j.value("composition", "");
    s.checklist = j.at("checklist").get<std::map<std::string, std::vector<std::string>>>();
    s.annotators_required = j.value("annotators_required", 1);
    s.seed = j.value("seed", std::uint64_t{0});
    for (const auto& ji : j.at("items")) {
        SessionItem it;
        it.item_id = ji.at("item_id").get<std::string>();
        it.sample_id = ji.at("sample_id").get<std::string>();
        it.class_label = ji.at("class").get<int>();
        it.instance = ji.at("instance").get<int>();
        it.predicted = ji.at("pred").get<int>();
        it.correct = ji.at("correct").get<bool>();
        it.auto_unjudgeable = ji.value("auto_unjudgeable", false);
        if (ji.contains("auto_verdict")) it.auto_verdict = gradcam::verdict_from_json(ji.at("auto_verdict"));
        s.items.push_back(std::move(it));
    }

    const auto log_path = dir / "verdicts.jsonl";
    if (std::filesystem::exists(log_path)) {
        const std::string text = dataset::read_text_file(log_path);
        std::size_t pos = 0;
        while (pos < text.size()) {
            const auto nl = text.find('\n', pos);
            if (nl == std::string::npos) break; // torn final write
            const auto line = text.substr(pos, nl - pos);
            pos = nl + 1;
            if (line.empty()) continue;
            s.log.push_back(log_entry_from_json(nlohmann::json::parse(line)));
        }
    }
    return s;
}

void write_overlays(const std::filesystem::path& dir, const AnnotationSession& session, const dataset::Dataset& ds,
                    std::span<const gradcam::ExplanationRecord> records) {
    std::map<std::string, const gradcam::ExplanationRecord*> by_id;
    for (const auto& r : records) by_id[r.sample_id] = &r;
    std::filesystem::create_directories(dir / "overlays");
    for (const auto& it : session.items) {
        const auto* r = by_id.at(it.sample_id);
        write_png(dir / "overlays" / (it.item_id + ".png"), gradcam::render_overlay(ds.sample(it.sample_id).image, r->saliency));
    }
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace xbias::annotation
