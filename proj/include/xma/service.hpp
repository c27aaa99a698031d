#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "xma/export.hpp"
#include "xma/jsonl.hpp"
#include "xma/reannotate.hpp"

namespace xma {

struct ProgressSnapshot {
  std::size_t total = 0;
  std::size_t agreed = 0;
  std::size_t queued = 0;
  std::size_t leased = 0;
  std::size_t resolved = 0;
  std::size_t failed = 0;
  /// Share of records whose model vote contradicts the dataset label.
  double disagreement_rate = 0.0;
  /// Meme annotation time for every record still awaiting a human.
  double estimated_remaining_hours = 0.0;

  ordered_json to_json() const;
};

ProgressSnapshot progress_snapshot(const StateCounts& counts, const CostParams& cost = {});

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path static_assets_dir;
  /// Machine reports served under /api/v1/reports/{name}.
  std::filesystem::path reports_dir;
  double lease_ttl_s = 300.0;
  double max_lease_ttl_s = 3600.0;
};

/// REST facade over a Store. Every mutation goes through the store's
/// writer lock.
class Service {
 public:
  Service(Store& store, ServiceConfig config, CostParams cost = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket; returns the bound port. Throws Error on
  /// failure.
  int bind();
  /// Serves until stop(); then writes a store snapshot.
  void run();
  /// Safe from any thread. In-flight requests finish before run() returns.
  void stop();
  void wait_until_ready() const;
  int port() const { return port_; }

 private:
  void routes();

  Store& store_;
  ServiceConfig config_;
  CostParams cost_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace xma
