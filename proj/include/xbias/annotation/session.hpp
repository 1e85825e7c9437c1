#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xbias/core/error.hpp"
#include "xbias/dataset/types.hpp"
#include "xbias/gradcam/gradcam.hpp"
#include "xbias/metrics/types.hpp"

namespace xbias::annotation {

/// A submitted verdict that cannot be accepted.
class VerdictRejected : public Error {
public:
    VerdictRejected(const std::string& what, std::optional<gradcam::BiasVerdict> existing = std::nullopt)
        : Error(what), existing_(std::move(existing)) {}
    const std::optional<gradcam::BiasVerdict>& existing() const noexcept { return existing_; }

private:
    std::optional<gradcam::BiasVerdict> existing_;
};

/// One queued explanation. Everything except item_id and the overlay is
/// hidden from annotators and only used at export.
struct SessionItem {
    std::string item_id;
    std::string sample_id;
    int class_label = 0;
    int instance = 0;
    int predicted = 0;
    bool correct = false;
    std::optional<gradcam::BiasVerdict> auto_verdict;
    bool auto_unjudgeable = false;
};

struct LogEntry {
    std::string item_id;
    std::string annotator;
    std::string timestamp;
    /// nullopt marks an item the automatic judge could not assess.
    std::optional<gradcam::BiasVerdict> verdict;
};

struct Progress {
    std::size_t judged = 0;
    std::size_t total = 0;
    std::size_t cursor = 0;
};

struct AnnotationSession {
    std::string session_id;
    std::string attribute;
    std::array<std::string, 2> class_names;
    std::array<std::string, 2> instances;
    std::string composition_label;
    /// attribute -> feature checklist
    std::map<std::string, std::vector<std::string>> checklist;
    std::vector<SessionItem> items;
    std::vector<LogEntry> log;
    /// Verdicts needed per item; above 1 the item verdict is a majority vote.
    int annotators_required = 1;
    std::uint64_t seed = 0;

    const SessionItem& item(std::string_view item_id) const;
    /// Log entries for an item, in submission order.
    std::vector<const LogEntry*> entries(std::string_view item_id) const;
    bool complete(std::string_view item_id) const;
    /// Resolved verdict of a complete item (majority, ties -> unbiased).
    std::optional<gradcam::BiasVerdict> resolved(std::string_view item_id) const;
    bool unjudgeable(std::string_view item_id) const;
    Progress progress() const;
    /// First queued item still open for `annotator`, if any.
    std::optional<std::string> next_item(const std::string& annotator = {}) const;
};

struct SessionOptions {
    std::string session_id = "session";
    int budget_per_subgroup = 50;
    std::uint64_t seed = 0;
    int annotators_required = 1;
    std::string composition_label;
};

/// Stratified sample of `budget` records per (class, instance of
/// `attribute`), shuffled by seeded priority so order reveals nothing.
AnnotationSession create_session(std::span<const gradcam::ExplanationRecord> records, const dataset::Dataset& ds,
                                 const std::string& attribute, const SessionOptions& options);

struct VerdictInput {
    bool biased = false;
    std::string attribute;
    std::string feature;
    std::string annotator;
};

/// Validates and appends a human verdict; returns the new progress.
Progress submit_verdict(AnnotationSession& session, const std::string& item_id, const VerdictInput& input,
                        const std::string& timestamp);

/// Copies the stored automatic verdicts into the log (annotator "auto").
void auto_judge(AnnotationSession& session, const std::string& timestamp);

/// Counts grouped by true subgroup. Unjudged items raise a ValidationError
/// listing them unless `allow_partial`, in which case they are skipped.
metrics::BiasCountTable export_counts(const AnnotationSession& session, bool allow_partial = false);

struct AgreementStats {
    std::size_t n_both = 0;
    double agreement = 0;
    /// confusion[auto biased][human biased]
    std::array<std::array<std::size_t, 2>, 2> confusion{};
};

/// Item-level agreement between two verdict sets keyed by sample id.
AgreementStats reconcile(const std::map<std::string, bool>& human, const std::map<std::string, bool>& automatic);
/// Human verdicts of a session against its stored automatic verdicts.
AgreementStats reconcile(const AnnotationSession& session);

/// Annotator-facing payload: item id, overlay URL, checklist, progress.
nlohmann::json item_payload(const AnnotationSession& session, const std::string& item_id);
nlohmann::json session_meta(const AnnotationSession& session);

nlohmann::json log_entry_json(const LogEntry& e);
LogEntry log_entry_from_json(const nlohmann::json& j);

/// Session directory: session.json (queue and metadata), verdicts.jsonl
/// (append-only log) and overlays/<item_id>.png.
void save_session(const std::filesystem::path& dir, const AnnotationSession& session);
void append_log(const std::filesystem::path& dir, const LogEntry& entry);
/// Loads session.json and replays verdicts.jsonl.
AnnotationSession load_session(const std::filesystem::path& dir);

/// Writes overlays for every queued item from the dataset images.
void write_overlays(const std::filesystem::path& dir, const AnnotationSession& session, const dataset::Dataset& ds,
                    std::span<const gradcam::ExplanationRecord> records);

std::string utc_timestamp();

} // namespace xbias::annotation
