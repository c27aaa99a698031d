#include "xma/service.hpp"

#include <httplib.h>

#include <regex>

#include "xma/errors.hpp"

namespace xma {

namespace fs = std::filesystem;

ordered_json ProgressSnapshot::to_json() const {
  ordered_json j;
  j["total"] = total;
  j["agreed"] = agreed;
  j["queued"] = queued;
  j["leased"] = leased;
  j["resolved"] = resolved;
  j["failed"] = failed;
  j["disagreement_rate"] = disagreement_rate;
  j["estimated_remaining_hours"] = estimated_remaining_hours;
  return j;
}

ProgressSnapshot progress_snapshot(const StateCounts& c, const CostParams& cost) {
  ProgressSnapshot p;
  p.total = c.total;
  p.agreed = c.agreed;
  p.queued = c.queued;
  p.leased = c.leased;
  p.resolved = c.resolved;
  p.failed = c.failed;
  p.disagreement_rate =
      c.total == 0 ? 0.0 : static_cast<double>(c.disagreements) / static_cast<double>(c.total);
  auto remaining = cost;
  remaining.disagreement_rate = 1.0;
  p.estimated_remaining_hours =
      estimate_annotation_hours(MediaKind::Meme, c.awaiting_human(), remaining);
  return p;
}

struct Service::Impl {
  httplib::Server server;
};

namespace {

void send_json(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, ordered_json{{"error", message}});
}

std::string content_type_for(const fs::path& p) {
  auto ext = normalize_label(p.extension().string());
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".jsonl") return "application/x-ndjson";
  return "application/octet-stream";
}

bool send_file(httplib::Response& res, const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) return false;
  res.status = 200;
  res.set_content(read_text_file(path), content_type_for(path));
  return true;
}

/// Resolves `rel` under `root`, refusing anything that escapes it.
std::optional<fs::path> contained(const fs::path& root, const std::string& rel) {
  if (root.empty()) return std::nullopt;
  auto base = fs::weakly_canonical(root);
  auto full = fs::weakly_canonical(base / fs::path(rel).relative_path());
  auto r = full.lexically_relative(base);
  if (r.empty() || *r.begin() == "..") return std::nullopt;
  return full;
}

ordered_json outcome_json(const VoteOutcome& o) {
  ordered_json j;
  j["item_id"] = o.item_id;
  j["final_label"] = o.final_label ? ordered_json(to_string(*o.final_label)) : ordered_json();
  j["state"] = to_string(o.state);
  return j;
}

std::optional<BinaryLabel> label_from_request(const std::string& s, const TaskDef& task) {
  if (auto l = binary_label_from_string(s)) return l;
  return task.parse_word(s);
}

}  // namespace

Service::Service(Store& store, ServiceConfig config, CostParams cost)
    : store_(store), config_(std::move(config)), cost_(cost), impl_(std::make_unique<Impl>()) {
  if (!(config_.lease_ttl_s > 0.0)) throw ConfigError("lease_ttl_s must be positive");
  routes();
}

Service::~Service() = default;

void Service::routes() {
  auto& svr = impl_->server;

  svr.Get("/api/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, ordered_json{{"status", "ok"}, {"seq", store_.seq()}});
  });

  svr.Get("/api/v1/progress", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, progress_snapshot(store_.counts(), cost_).to_json());
  });

  svr.Get("/api/v1/queue/lease", [this](const httplib::Request& req, httplib::Response& res) {
    const auto annotator = req.get_header_value("X-Annotator-Id");
    if (annotator.empty()) return send_error(res, 400, "missing X-Annotator-Id header");
    double ttl = config_.lease_ttl_s;
    if (req.has_param("ttl_s")) {
      try {
        std::size_t used = 0;
        const auto raw = req.get_param_value("ttl_s");
        ttl = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
      } catch (const std::exception&) {
        return send_error(res, 400, "ttl_s must be a number");
      }
      if (!(ttl > 0.0) || ttl > config_.max_lease_ttl_s) {
        return send_error(res, 400, "ttl_s out of range");
      }
    }
    auto task = store_.lease_next(annotator, ttl);
    if (!task) {
      res.status = 204;
      return;
    }
    ordered_json j;
    j["item_id"] = task->item_id;
    j["lease_token"] = task->lease_token;
    j["expires_at"] = task->expires_at_ms;
    j["ttl_s"] = ttl;
    j["text"] = task->text;
    j["media_url"] = "/media/" + task->item_id;
    j["definition_text"] = task->definition_text;
    j["candidate_labels"] = task->candidate_labels;
    send_json(res, 200, j);
  });

  svr.Post("/api/v1/annotations", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return send_error(res, 400, "body is not valid JSON");
    }
    if (!body.is_object()) return send_error(res, 400, "body must be a JSON object");
    AnnotationEvent ev;
    try {
      ev.item_id = body.at("item_id").get<std::string>();
      ev.lease_token = body.at("lease_token").get<std::string>();
      auto label = label_from_request(body.at("label").get<std::string>(), store_.task());
      if (!label) return send_error(res, 400, "label must be positive or negative");
      ev.label = *label;
      ev.elapsed_s = body.at("elapsed_s").get<double>();
    } catch (const json::exception&) {
      return send_error(res, 400, "expected {item_id, lease_token, label, elapsed_s}");
    }
    ev.annotator_id = req.get_header_value("X-Annotator-Id");
    if (ev.annotator_id.empty()) ev.annotator_id = body.value("annotator_id", "");
    if (ev.annotator_id.empty()) return send_error(res, 400, "missing X-Annotator-Id header");
    try {
      send_json(res, 200, outcome_json(store_.submit_annotation(ev)));
    } catch (const ConflictError& e) {
      send_error(res, 409, e.what());
    } catch (const LeaseExpiredError& e) {
      send_error(res, 410, e.what());
    } catch (const LeaseError& e) {
      send_error(res, 404, e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, e.what());
    }
  });

  svr.Get(R"(/api/v1/items/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto rec = store_.record(req.matches[1]);
    if (!rec) return send_error(res, 404, "no such item");
    ordered_json j;
    j["item_id"] = rec->item_id;
    j["text"] = rec->text;
    j["media_url"] = "/media/" + rec->item_id;
    j["state"] = to_string(rec->state);
    j["final_label"] =
        rec->final_label ? ordered_json(to_string(*rec->final_label)) : ordered_json();
    j["definition_text"] = store_.task().definition_text;
    j["candidate_labels"] = store_.task().vocabulary();
    send_json(res, 200, j);
  });

  svr.Get(R"(/media/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto rec = store_.record(req.matches[1]);
    if (!rec || rec->image.empty() || !send_file(res, rec->image)) {
      send_error(res, 404, "no media for item");
    }
  });

  svr.Get(R"(/api/v1/reports/([A-Za-z0-9_.\-]+))",
          [this](const httplib::Request& req, httplib::Response& res) {
            std::string name = req.matches[1];
            if (name.find("..") != std::string::npos) return send_error(res, 404, "no such report");
            auto path = contained(config_.reports_dir,
                                  name.size() > 6 && name.ends_with(".jsonl") ? name
                                                                              : name + ".jsonl");
            if (!path || !send_file(res, *path)) send_error(res, 404, "no such report");
          });

  svr.Get("/", [this](const httplib::Request&, httplib::Response& res) {
    auto path = contained(config_.static_assets_dir, "index.html");
    if (!path || !send_file(res, *path)) send_error(res, 404, "no annotator UI installed");
  });

  svr.Get(R"(/assets/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto path = contained(config_.static_assets_dir, req.matches[1]);
    if (!path || !send_file(res, *path)) send_error(res, 404, "not found");
  });

  svr.set_exception_handler(
      [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          send_error(res, 500, e.what());
        } catch (...) {
          send_error(res, 500, "internal error");
        }
      });
}

int Service::bind() {
  auto& svr = impl_->server;
  if (config_.port == 0) {
    port_ = svr.bind_to_any_port(config_.host);
    if (port_ <= 0) throw Error("cannot bind " + config_.host);
  } else {
    if (!svr.bind_to_port(config_.host, config_.port)) {
      throw Error("cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
    port_ = config_.port;
  }
  return port_;
}

void Service::run() {
  impl_->server.listen_after_bind();
  store_.write_snapshot();
}

void Service::stop() { impl_->server.stop(); }

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace xma
