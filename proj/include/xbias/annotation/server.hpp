#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "xbias/annotation/session.hpp"

namespace httplib {
class Server;
}

namespace xbias::annotation {

/// HTTP front end over the session directories found under `root`
/// (each subdirectory holding a session.json).
class AnnotationServer {
public:
    explicit AnnotationServer(std::filesystem::path root, std::filesystem::path ui_dir = {});
    ~AnnotationServer();
    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    /// Binds and serves until stop(). Returns false if binding failed.
    bool listen(const std::string& host, int port);
    /// Binds to an ephemeral port; returns it, or -1.
    int bind_any(const std::string& host);
    bool listen_after_bind();
    void stop();
    bool running() const;

    std::shared_ptr<const AnnotationSession> snapshot(const std::string& session_id) const;

private:
    struct Entry {
        std::filesystem::path dir;
        std::mutex write_mutex;
        mutable std::mutex snapshot_mutex;
        std::shared_ptr<const AnnotationSession> current;
    };

    Entry* find(const std::string& session_id) const;
    void routes();

    std::filesystem::path root_;
    std::filesystem::path ui_dir_;
    std::map<std::string, std::unique_ptr<Entry>> sessions_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace xbias::annotation
