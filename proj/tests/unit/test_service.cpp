#include <doctest.h>

#include <httplib.h>

#include <set>
#include <thread>

#include "support.hpp"
#include "xma/errors.hpp"
#include "xma/service.hpp"

using namespace xma;
using test::TempDir;
namespace fs = std::filesystem;

namespace {

// A store over the first `n` mini memes, the stub disagreeing on every
// second item and failing on every fifth.
struct Running {
  TempDir dir{"service"};
  ManualClock clock;
  Dataset memes;
  std::unique_ptr<Store> store;
  std::unique_ptr<Service> service;
  std::thread thread;
  int port = 0;

  explicit Running(std::size_t n = 10) {
    memes = test::mhc_memes();
    memes.items.resize(n);
    std::map<std::string, Prediction> preds;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& item = memes.items[i];
      auto label = *test::mhc_task().parse_word(item.original_label);
      if (i % 5 == 4) {
        preds[item.item_id] = Prediction::failed();
      } else {
        preds[item.item_id] = Prediction::ok(i % 2 ? opposite(label) : label);
      }
    }
    Store::initialize(dir / "store", test::mhc_task());
    store = std::make_unique<Store>(dir / "store", clock, Store::Options{0, false});
    store->enqueue_disagreements(memes, preds);

    test::write_text(dir / "assets/index.html", "<html>annotator</html>");
    test::write_text(dir / "assets/js/app.js", "console.log(1);");
    test::write_text(dir / "secret.txt", "do not serve");
    test::write_text(dir / "reports/sweep.jsonl", "{\"kind\":\"header\"}\n");

    ServiceConfig cfg;
    cfg.port = 0;
    cfg.static_assets_dir = dir / "assets";
    cfg.reports_dir = dir / "reports";
    cfg.lease_ttl_s = 60;
    cfg.max_lease_ttl_s = 600;
    service = std::make_unique<Service>(*store, cfg);
    port = service->bind();
    thread = std::thread([this] { service->run(); });
    service->wait_until_ready();
  }
  ~Running() {
    service->stop();
    thread.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_default_headers({{"X-Annotator-Id", "tester"}});
    return c;
  }
};

json body_of(const httplib::Result& r) { return json::parse(r->body); }

httplib::Result submit(httplib::Client& c, const json& lease, const std::string& label,
                       double elapsed = 4.2) {
  json body{{"item_id", lease["item_id"]},
            {"lease_token", lease["lease_token"]},
            {"label", label},
            {"elapsed_s", elapsed}};
  return c.Post("/api/v1/annotations", body.dump(), "application/json");
}

}  // namespace

TEST_CASE("progress snapshot arithmetic") {
  StateCounts c;
  c.total = 10;
  c.agreed = 4;
  c.queued = 3;
  c.leased = 1;
  c.resolved = 1;
  c.failed = 1;
  c.disagreements = 5;
  auto p = progress_snapshot(c);
  CHECK(p.agreed + p.queued + p.leased + p.resolved + p.failed == p.total);
  CHECK(p.disagreement_rate == doctest::Approx(0.5));
  CHECK(p.estimated_remaining_hours == doctest::Approx(5 * 0.5 / 60));
  CHECK(progress_snapshot(StateCounts{}).disagreement_rate == 0.0);
  auto j = p.to_json();
  CHECK(j["total"] == 10);
  CHECK(j.contains("estimated_remaining_hours"));
}

TEST_CASE("health, progress and item lookups") {
  Running svc;
  auto c = svc.client();
  auto health = c.Get("/api/v1/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(body_of(health)["seq"] == 10);

  auto progress = body_of(c.Get("/api/v1/progress"));
  CHECK(progress["total"] == 10);
  CHECK(progress["agreed"].get<int>() + progress["queued"].get<int>() +
            progress["leased"].get<int>() + progress["resolved"].get<int>() +
            progress["failed"].get<int>() ==
        10);
  CHECK(progress["failed"] == 2);

  auto item = c.Get("/api/v1/items/meme_001");
  REQUIRE(item);
  CHECK(item->status == 200);
  CHECK(body_of(item)["state"] == "AGREED");
  CHECK(c.Get("/api/v1/items/nope")->status == 404);

  auto media = c.Get("/media/meme_001");
  CHECK(media->status == 200);
  CHECK(media->get_header_value("Content-Type") == "image/png");
  CHECK(media->body == read_text_file(svc.memes.items[0].image));
  CHECK(c.Get("/media/nope")->status == 404);
}

TEST_CASE("lease, annotate and the error statuses") {
  Running svc;
  auto c = svc.client();
  auto lease = c.Get("/api/v1/queue/lease?ttl_s=30");
  REQUIRE(lease);
  REQUIRE(lease->status == 200);
  auto l = body_of(lease);
  CHECK(l["item_id"] == "meme_002");
  CHECK(l["ttl_s"] == 30.0);
  CHECK(l["candidate_labels"] == json::array({"offensive", "non-offensive"}));
  CHECK(l["media_url"] == "/media/meme_002");
  CHECK_FALSE(l.contains("original_label"));
  CHECK_FALSE(l.contains("model"));

  auto ok = submit(c, l, "positive");
  REQUIRE(ok);
  CHECK(ok->status == 200);
  CHECK(body_of(ok)["state"] == "RESOLVED");
  CHECK(body_of(ok)["final_label"] == "positive");
  CHECK(submit(c, l, "positive")->status == 409);

  auto unknown = l;
  unknown["lease_token"] = "00000000000000000000000000000000";
  CHECK(submit(c, unknown, "negative")->status == 404);

  auto next = body_of(c.Get("/api/v1/queue/lease?ttl_s=5"));
  CHECK(submit(c, next, "maybe")->status == 400);
  svc.clock.advance_ms(5'000);
  CHECK(submit(c, next, "negative")->status == 410);
  CHECK(svc.store->record(next["item_id"])->state != RecordState::Leased);

  // Task words are accepted as well as positive/negative.
  auto again = body_of(c.Get("/api/v1/queue/lease"));
  CHECK(again["item_id"] == next["item_id"]);
  auto words = submit(c, again, "non-offensive");
  CHECK(body_of(words)["final_label"] == "negative");

  CHECK(c.Post("/api/v1/annotations", "{not json", "application/json")->status == 400);
  CHECK(c.Post("/api/v1/annotations", "{\"item_id\":\"x\"}", "application/json")->status == 400);
  CHECK(c.Get("/api/v1/queue/lease?ttl_s=abc")->status == 400);
  CHECK(c.Get("/api/v1/queue/lease?ttl_s=-1")->status == 400);
  CHECK(c.Get("/api/v1/queue/lease?ttl_s=601")->status == 400);
  httplib::Client anonymous("127.0.0.1", svc.port);
  CHECK(anonymous.Get("/api/v1/queue/lease")->status == 400);
}

TEST_CASE("draining the queue ends with 204") {
  Running svc;
  auto c = svc.client();
  int leased = 0;
  for (;;) {
    auto r = c.Get("/api/v1/queue/lease");
    REQUIRE(r);
    if (r->status == 204) break;
    REQUIRE(r->status == 200);
    ++leased;
    CHECK(submit(c, body_of(r), leased % 2 ? "positive" : "negative")->status == 200);
  }
  auto progress = body_of(c.Get("/api/v1/progress"));
  CHECK(progress["queued"] == 0);
  CHECK(progress["failed"] == 0);
  CHECK(progress["resolved"] == leased);
  CHECK(progress["estimated_remaining_hours"] == 0.0);
}

TEST_CASE("static assets and reports stay inside their directories") {
  Running svc;
  auto c = svc.client();
  auto index = c.Get("/");
  CHECK(index->status == 200);
  CHECK(index->body == "<html>annotator</html>");
  CHECK(index->get_header_value("Content-Type").rfind("text/html", 0) == 0);
  auto js = c.Get("/assets/js/app.js");
  CHECK(js->status == 200);
  CHECK(js->get_header_value("Content-Type") == "text/javascript");
  CHECK(c.Get("/assets/missing.css")->status == 404);
  for (const char* path : {"/assets/../secret.txt", "/assets/%2e%2e/secret.txt",
                           "/assets/js/../../secret.txt", "/assets/%2e%2e%2fsecret.txt"}) {
    auto r = c.Get(path);
    REQUIRE(r);
    CHECK(r->status == 404);
    CHECK(r->body.find("do not serve") == std::string::npos);
  }
  auto report = c.Get("/api/v1/reports/sweep");
  CHECK(report->status == 200);
  CHECK(report->body == "{\"kind\":\"header\"}\n");
  CHECK(c.Get("/api/v1/reports/sweep.jsonl")->status == 200);
  CHECK(c.Get("/api/v1/reports/..")->status == 404);
  CHECK(c.Get("/api/v1/reports/absent")->status == 404);
}

TEST_CASE("concurrent HTTP leases are distinct") {
  Running svc(40);
  const auto pending = svc.store->counts().awaiting_human();
  std::mutex mu;
  std::vector<std::string> items;
  std::atomic<int> errors{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < 8; ++t) {
    pool.emplace_back([&, t] {
      httplib::Client c("127.0.0.1", svc.port);
      c.set_default_headers({{"X-Annotator-Id", "a" + std::to_string(t)}});
      for (;;) {
        auto r = c.Get("/api/v1/queue/lease");
        if (!r) {
          ++errors;
          return;
        }
        if (r->status == 204) return;
        auto l = json::parse(r->body);
        {
          std::lock_guard lock(mu);
          items.push_back(l["item_id"]);
        }
        auto s = submit(c, l, "negative");
        if (!s || s->status != 200) ++errors;
      }
    });
  }
  for (auto& th : pool) th.join();
  CHECK(errors.load() == 0);
  CHECK(items.size() == pending);
  CHECK(std::set<std::string>(items.begin(), items.end()).size() == pending);
}

TEST_CASE("service writes a snapshot when it stops") {
  fs::path snap;
  {
    Running svc;
    snap = svc.dir / "store" / "state.snap";
    CHECK_FALSE(fs::exists(snap));
    auto c = svc.client();
    submit(c, body_of(c.Get("/api/v1/queue/lease")), "positive");
    svc.service->stop();
    svc.thread.join();
    CHECK(fs::exists(snap));
    CHECK(json::parse(read_text_file(snap))["seq"] == 12);
    svc.thread = std::thread([] {});
  }
}
