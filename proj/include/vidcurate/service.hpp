#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro that clashes with Eigen.
#include "session.hpp"

#include <httplib.h>
#include <json.hpp>

namespace vidcurate {

// HTTP facade over a SessionStore. Label submissions are answered synchronously;
// round advances run on a background job worker and are polled by id.

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    /// Per-video detail documents for GET /api/videos/{id} (record fields plus "term_hits").
    std::map<std::string, nlohmann::json> videos;
};

class ReviewService {
public:
    ReviewService(SessionStore& store, ServiceOptions opt) : store_(store), opt_(std::move(opt)) {
        routes();
        worker_ = std::jthread([this](std::stop_token st) { work(st); });
    }

    ~ReviewService() { shutdown(); }

    ReviewService(const ReviewService&) = delete;
    ReviewService& operator=(const ReviewService&) = delete;

    /// Binds the listening socket and returns the bound port; throws DataError on failure.
    int bind() {
        int port = opt_.port;
        if (port == 0) {
            port = server_.bind_to_any_port(opt_.host);
            if (port < 0) throw DataError("cannot bind " + opt_.host);
        } else if (!server_.bind_to_port(opt_.host, port)) {
            throw DataError("cannot bind " + opt_.host + ":" + std::to_string(port));
        }
        return port;
    }

    /// Serves until shutdown(); call bind() first.
    void listen() { server_.listen_after_bind(); }

    void wait_until_ready() const { server_.wait_until_ready(); }

    /// Stops accepting requests, finishes queued jobs and snapshots the store.
    void shutdown() {
        if (std::exchange(down_, true)) return;
        server_.stop();
        {
            std::lock_guard lock(jobs_mutex_);
            worker_.request_stop();
        }
        jobs_cv_.notify_all();
        if (worker_.joinable()) worker_.join();
        store_.snapshot();
    }

private:
    struct Job {
        std::string id;
        Dimension dimension = Dimension::med;
        std::string status = "queued";  // queued | running | done | failed
        nlohmann::json report;
        std::string error;
    };

    static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json; charset=utf-8");
    }

    static void error(httplib::Response& res, int status, const std::string& msg, nlohmann::json extra = {}) {
        nlohmann::json body = extra.is_object() ? extra : nlohmann::json::object();
        body["error"] = msg;
        reply(res, status, body);
    }

    std::vector<Dimension> requested(const httplib::Request& req) const {
        if (!req.has_param("dimension")) return store_.dimensions();
        const auto d = parse_dimension(req.get_param_value("dimension"));
        if (!store_.has(d)) throw UsageError(std::string("dimension ") + to_string(d) + " is not served");
        return {d};
    }

    Dimension one_dimension(const httplib::Request& req) const {
        if (!req.has_param("dimension")) {
            const auto dims = store_.dimensions();
            if (dims.size() == 1) return dims.front();
            throw UsageError("dimension parameter required");
        }
        return requested(req).front();
    }

    nlohmann::json excerpt(const std::string& id) const {
        auto it = opt_.videos.find(id);
        if (it == opt_.videos.end()) return nullptr;
        const auto& v = it->second;
        std::string desc = v.value("description", "");
        if (desc.size() > 160) {
            std::size_t cut = 160;
            while (cut > 0 && (static_cast<unsigned char>(desc[cut]) & 0xC0) == 0x80) --cut;  // UTF-8 boundary
            desc = desc.substr(0, cut) + "...";
        }
        return {{"title", v.value("title", "")}, {"channel_title", v.value("channel_title", "")}, {"description", desc}};
    }

    template <class F>
    void guarded(httplib::Response& res, F&& f) {
        try {
            f();
        } catch (const UsageError& e) {
            error(res, 400, e.what());
        } catch (const nlohmann::json::exception& e) {
            error(res, 400, std::string("malformed request: ") + e.what());
        } catch (const std::exception& e) {
            error(res, 500, e.what());
        }
    }

    void routes() {
        server_.Get("/api/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"status", "ok"}}); });

        server_.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                nlohmann::json items = nlohmann::json::array();
                for (auto d : requested(req)) {
                    const auto s = store_.state(d);
                    for (const auto& r : s->review_queue) {
                        if (r.status != ReviewStatus::pending) continue;
                        auto j = to_json(r);
                        j["metadata"] = excerpt(r.video_id);
                        items.push_back(j);
                    }
                }
                reply(res, 200, {{"items", items}});
            });
        });

        server_.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto body = nlohmann::json::parse(req.body);
                LabelSubmission sub;
                sub.video_id = body.at("video_id").get<std::string>();
                sub.dimension = parse_dimension(body.at("dimension").get<std::string>());
                sub.label = parse_binary(body.at("label").get<std::string>());
                sub.resolver = body.at("resolver").get<std::string>();
                sub.revision = body.at("revision").get<std::uint64_t>();
                if (!store_.has(sub.dimension)) throw UsageError("dimension is not served");
                const auto r = store_.submit(sub);
                nlohmann::json out{{"video_id", sub.video_id}, {"revision", r.revision}, {"message", r.message}};
                switch (r.status) {
                    case SubmitResult::Status::applied: out["status"] = "applied"; reply(res, 200, out); break;
                    case SubmitResult::Status::duplicate: out["status"] = "duplicate"; reply(res, 200, out); break;
                    case SubmitResult::Status::conflict: error(res, 409, r.message, out); break;
                    case SubmitResult::Status::not_found: error(res, 404, r.message, out); break;
                }
            });
        });

        server_.Get("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                nlohmann::json labels = nlohmann::json::array();
                for (auto d : requested(req))
                    for (const auto& l : export_labels(*store_.state(d))) labels.push_back(to_json(l));
                reply(res, 200, {{"labels", labels}});
            });
        });

        server_.Post("/api/rounds/advance", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto d = one_dimension(req);
                if (auto ids = SessionStore::pending_ids(*store_.state(d)); !ids.empty()) {
                    error(res, 409, "pending review items must be resolved first", {{"pending", ids}});
                    return;
                }
                std::lock_guard lock(jobs_mutex_);
                Job job;
                job.id = "job-" + std::to_string(++job_counter_);
                job.dimension = d;
                jobs_[job.id] = job;
                queue_.push_back(job.id);
                jobs_cv_.notify_one();
                reply(res, 202, {{"job", job.id}, {"status", "queued"}});
            });
        });

        server_.Get(R"(/api/rounds/status/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(jobs_mutex_);
            auto it = jobs_.find(req.matches[1].str());
            if (it == jobs_.end()) return error(res, 404, "unknown job");
            const auto& j = it->second;
            nlohmann::json out{{"job", j.id}, {"dimension", to_string(j.dimension)}, {"status", j.status}};
            out["report"] = j.report;
            if (!j.error.empty()) out["error"] = j.error;
            reply(res, 200, out);
        });

        server_.Get("/api/stats", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                nlohmann::json out = nlohmann::json::array();
                for (auto d : requested(req)) out.push_back(stats(*store_.state(d)));
                reply(res, 200, {{"dimensions", out}});
            });
        });

        server_.Get(R"(/api/videos/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            auto it = opt_.videos.find(req.matches[1].str());
            if (it == opt_.videos.end()) return error(res, 404, "unknown video " + req.matches[1].str());
            reply(res, 200, it->second);
        });
    }

    static nlohmann::json stats(const CoTrainState& s) {
        nlohmann::json history = nlohmann::json::array();
        for (std::size_t i = 0; i < s.history.size(); ++i) {
            const auto& h = s.history[i];
            nlohmann::json e{{"index", i}, {"accuracy", h.accuracy}};
            e["macro_f1"] = h.macro_f1 ? nlohmann::json(*h.macro_f1) : nlohmann::json(nullptr);
            e["auc"] = h.auc ? nlohmann::json(*h.auc) : nlohmann::json(nullptr);
            history.push_back(e);
        }
        const auto stop = should_stop(s);
        nlohmann::json reasons = nlohmann::json::array();
        for (auto r : stop.reasons) reasons.push_back(to_string(r));
        return {{"dimension", to_string(s.config.target)},
                {"round", s.round},
                {"labeled", s.labeled.size()},
                {"unlabeled", s.unlabeled.size()},
                {"pending", s.pending_count()},
                {"discarded", s.discarded.size()},
                {"history", history},
                {"stop", {{"stop", stop.stop}, {"reasons", reasons}}}};
    }

    void work(std::stop_token st) {
        while (true) {
            std::string id;
            Dimension d{};
            {
                std::unique_lock lock(jobs_mutex_);
                jobs_cv_.wait(lock, [&] { return !queue_.empty() || st.stop_requested(); });
                if (queue_.empty()) return;
                id = queue_.front();
                queue_.pop_front();
                jobs_[id].status = "running";
                d = jobs_[id].dimension;
            }
            nlohmann::json report;
            std::string failure;
            try {
                report = to_json(store_.advance(d));
            } catch (const std::exception& e) {
                failure = e.what();
            }
            std::lock_guard lock(jobs_mutex_);
            auto& job = jobs_[id];
            job.status = failure.empty() ? "done" : "failed";
            job.report = report;
            job.error = failure;
        }
    }

    SessionStore& store_;
    ServiceOptions opt_;
    httplib::Server server_;
    std::mutex jobs_mutex_;
    std::condition_variable jobs_cv_;
    std::deque<std::string> queue_;
    std::map<std::string, Job> jobs_;
    std::uint64_t job_counter_ = 0;
    bool down_ = false;
    std::jthread worker_;
};

}  // namespace vidcurate
