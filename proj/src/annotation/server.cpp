#include "xbias/annotation/server.hpp"

#include <httplib.h>

#include <fmt/format.h>

#include "xbias/dataset/manifest.hpp"

namespace xbias::annotation {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
}

} // namespace

AnnotationServer::AnnotationServer(std::filesystem::path root, std::filesystem::path ui_dir)
    : root_(std::move(root)), ui_dir_(std::move(ui_dir)), server_(std::make_unique<httplib::Server>()) {
    if (!std::filesystem::is_directory(root_)) throw ConfigError("no session directory at " + root_.string());
    std::vector<std::filesystem::path> dirs;
    if (std::filesystem::exists(root_ / "session.json")) dirs.push_back(root_);
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root_)) {
        if (entry.is_regular_file() && entry.path().filename() == "session.json" && entry.path().parent_path() != root_) {
            dirs.push_back(entry.path().parent_path());
        }
    }
    for (const auto& dir : dirs) {
        auto e = std::make_unique<Entry>();
        e->dir = dir;
        auto session = load_session(dir);
        const std::string id = session.session_id;
        e->current = std::make_shared<const AnnotationSession>(std::move(session));
        if (sessions_.contains(id)) throw ConfigError(fmt::format("duplicate session id '{}'", id));
        sessions_.emplace(id, std::move(e));
    }
    if (!ui_dir_.empty() && !server_->set_mount_point("/", ui_dir_.string())) {
        throw ConfigError("UI directory not found: " + ui_dir_.string());
    }
    routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

AnnotationServer::Entry* AnnotationServer::find(const std::string& session_id) const {
    const auto it = sessions_.find(session_id);
    return it == sessions_.end() ? nullptr : it->second.get();
}

std::shared_ptr<const AnnotationSession> AnnotationServer::snapshot(const std::string& session_id) const {
    auto* e = find(session_id);
    if (!e) return nullptr;
    std::lock_guard lock(e->snapshot_mutex);
    return e->current;
}

void AnnotationServer::routes() {
    auto& svr = *server_;

    svr.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& [id, e] : sessions_) list.push_back(session_meta(*snapshot(id)));
        send_json(res, 200, list);
    });

    svr.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto s = snapshot(req.matches[1]);
        if (!s) return send_error(res, 404, "unknown session");
        send_json(res, 200, session_meta(*s));
    });

    svr.Get(R"(/sessions/([^/]+)/items/next)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto s = snapshot(req.matches[1]);
        if (!s) return send_error(res, 404, "unknown session");
        const auto next = s->next_item(req.get_param_value("annotator"));
        if (!next) {
            const auto p = s->progress();
            return send_json(res, 200, {{"done", true}, {"progress", {{"judged", p.judged}, {"total", p.total}}}});
        }
        send_json(res, 200, item_payload(*s, *next));
    });

    svr.Get(R"(/sessions/([^/]+)/items/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto s = snapshot(req.matches[1]);
        if (!s) return send_error(res, 404, "unknown session");
        try {
            send_json(res, 200, item_payload(*s, req.matches[2]));
        } catch (const VerdictRejected& e) {
            send_error(res, 404, e.what());
        }
    });

    svr.Post(R"(/sessions/([^/]+)/items/([^/]+)/verdict)", [this](const httplib::Request& req,
                                                                    httplib::Response& res) {
        auto* e = find(req.matches[1]);
        if (!e) return send_error(res, 404, "unknown session");
        const std::string item_id = req.matches[2];
        VerdictInput input;
        try {
            const auto body = nlohmann::json::parse(req.body);
            input.biased = body.at("biased").get<bool>();
            input.attribute = body.value("attribute", "");
            input.feature = body.value("feature", "");
            input.annotator = body.value("annotator", "");
        } catch (const std::exception& ex) {
            return send_error(res, 400, std::string("malformed verdict: ") + ex.what());
        }

        std::lock_guard write(e->write_mutex);
        std::shared_ptr<const AnnotationSession> current;
        {
            std::lock_guard lock(e->snapshot_mutex);
            current = e->current;
        }
        auto next = std::make_shared<AnnotationSession>(*current);
        try {
            next->item(item_id);
        } catch (const VerdictRejected& ex) {
            return send_error(res, 404, ex.what());
        }
        Progress p;
        try {
            p = submit_verdict(*next, item_id, input, utc_timestamp());
        } catch (const VerdictRejected& ex) {
            nlohmann::json body{{"error", ex.what()}};
            if (ex.existing()) {
                body["existing"] = gradcam::to_json(*ex.existing());
                return send_json(res, 409, body);
            }
            return send_json(res, 400, body);
        }
        try {
            append_log(e->dir, next->log.back());
        } catch (const std::exception& ex) {
            return send_error(res, 500, ex.what());
        }
        {
            std::lock_guard lock(e->snapshot_mutex);
            e->current = std::move(next);
        }
        send_json(res, 200, {{"judged", p.judged}, {"total", p.total}, {"cursor", p.cursor}});
    });

    svr.Get(R"(/sessions/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto s = snapshot(req.matches[1]);
        if (!s) return send_error(res, 404, "unknown session");
        const bool partial = req.get_param_value("partial") == "1" || req.get_param_value("partial") == "true";
        try {
            send_json(res, 200, metrics::to_json(export_counts(*s, partial)));
        } catch (const ValidationError& ex) {
            send_json(res, 409, {{"error", ex.what()}, {"unjudged", ex.offending_ids()}});
        }
    });

    svr.Get(R"(/sessions/([^/]+)/overlays/([^/]+)\.png)", [this](const httplib::Request& req,
                                                                   httplib::Response& res) {
        auto* e = find(req.matches[1]);
        if (!e) return send_error(res, 404, "unknown session");
        const auto s = snapshot(req.matches[1]);
        try {
            s->item(req.matches[2].str());
        } catch (const VerdictRejected&) {
            return send_error(res, 404, "unknown item");
        }
        const auto path = e->dir / "overlays" / (req.matches[2].str() + ".png");
        if (!std::filesystem::exists(path)) return send_error(res, 404, "overlay missing");
        res.set_content(dataset::read_text_file(path), "image/png");
    });
}

bool AnnotationServer::listen(const std::string& host, int port) { return server_->listen(host, port); }

int AnnotationServer::bind_any(const std::string& host) { return server_->bind_to_any_port(host); }

bool AnnotationServer::listen_after_bind() { return server_->listen_after_bind(); }

void AnnotationServer::stop() {
    if (server_) server_->stop();
}

bool AnnotationServer::running() const { return server_->is_running(); }

} // namespace xbias::annotation
