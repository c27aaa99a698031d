#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <random>

#include "xma/errors.hpp"
#include "xma/reannotate.hpp"
#include "xma/rng.hpp"

namespace xma {

namespace fs = std::filesystem;

std::int64_t SystemClock::now_ms() const {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

namespace {

constexpr const char* kLogFile = "events.log";
constexpr const char* kSnapFile = "state.snap";
constexpr const char* kMetaFile = "meta.json";

json task_to_json(const TaskDef& t) {
  return json{{"task_id", t.task_id},
              {"positive_word", t.positive_word},
              {"negative_word", t.negative_word},
              {"question_template", t.question_template},
              {"definition_text", t.definition_text}};
}

TaskDef task_from_json(const json& j) {
  TaskDef t;
  t.task_id = j.at("task_id").get<std::string>();
  t.positive_word = j.at("positive_word").get<std::string>();
  t.negative_word = j.at("negative_word").get<std::string>();
  t.question_template = j.at("question_template").get<std::string>();
  t.definition_text = j.at("definition_text").get<std::string>();
  return t;
}

std::string model_word(const Prediction& p) {
  switch (p.status) {
    case PredictionStatus::Ok:
      return std::string(to_string(p.label));
    case PredictionStatus::Unparseable:
      return "UNPARSEABLE";
    case PredictionStatus::Failed:
      break;
  }
  return "PREDICTION_FAILED";
}

Prediction model_from_word(const std::string& w) {
  if (w == "UNPARSEABLE") return Prediction::unparseable();
  if (w == "PREDICTION_FAILED") return Prediction::failed();
  auto l = binary_label_from_string(w);
  if (!l) throw ParseError("bad model vote '" + w + "'", 0);
  return Prediction::ok(*l);
}

BinaryLabel label_field(const json& j, const char* key) {
  auto l = binary_label_from_string(j.at(key).get<std::string>());
  if (!l) throw ParseError(std::string("bad label in field '") + key + "'", 0);
  return *l;
}

json record_to_json(const VoteRecord& r) {
  json j{{"item_id", r.item_id},
         {"original", to_string(r.original)},
         {"model", model_word(r.model)},
         {"state", to_string(r.state)},
         {"text", r.text},
         {"image", r.image}};
  j["human"] = r.human ? json(to_string(*r.human)) : json(nullptr);
  j["final"] = r.final_label ? json(to_string(*r.final_label)) : json(nullptr);
  j["annotator_id"] = r.annotator_id ? json(*r.annotator_id) : json(nullptr);
  j["elapsed_s"] = r.elapsed_s ? json(*r.elapsed_s) : json(nullptr);
  return j;
}

VoteRecord record_from_json(const json& j) {
  VoteRecord r;
  r.item_id = j.at("item_id").get<std::string>();
  r.original = label_field(j, "original");
  r.model = model_from_word(j.at("model").get<std::string>());
  r.state = record_state_from_string(j.at("state").get<std::string>());
  r.text = j.value("text", "");
  r.image = j.value("image", "");
  if (!j.at("human").is_null()) r.human = label_field(j, "human");
  if (!j.at("final").is_null()) r.final_label = label_field(j, "final");
  if (!j.at("annotator_id").is_null()) r.annotator_id = j["annotator_id"].get<std::string>();
  if (!j.at("elapsed_s").is_null()) r.elapsed_s = j["elapsed_s"].get<double>();
  return r;
}

}  // namespace

void Store::initialize(const fs::path& dir, const TaskDef& task) {
  fs::create_directories(dir);
  auto meta = dir / kMetaFile;
  if (fs::exists(meta)) {
    auto existing = task_from_json(json::parse(read_text_file(meta)));
    if (!(existing == task)) {
      throw ConfigError("store " + dir.string() + " belongs to task '" +
                        existing.task_id + "', not '" + task.task_id + "'");
    }
    return;
  }
  write_file_atomic(meta, task_to_json(task).dump(2) + "\n");
}

Store::Store(const fs::path& dir, const Clock& clock, Options options)
    : dir_(dir), clock_(clock), options_(options) {
  auto meta = dir_ / kMetaFile;
  if (!fs::exists(meta)) {
    throw ConfigError("no store at " + dir_.string() + " (missing meta.json)");
  }
  try {
    task_ = task_from_json(json::parse(read_text_file(meta)));
  } catch (const json::exception& e) {
    throw StoreCorruptError("meta.json is unreadable: " + std::string(e.what()), 0, 0);
  }
  load_snapshot();
  replay_log();
  log_ = std::make_unique<AppendFile>(dir_ / kLogFile, options_.fsync);
  std::random_device rd;
  token_salt_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

Store::~Store() = default;

void Store::load_snapshot() {
  auto path = dir_ / kSnapFile;
  if (!fs::exists(path)) return;
  json snap;
  try {
    snap = json::parse(read_text_file(path));
    seq_ = snap.at("seq").get<std::uint64_t>();
    for (const auto& r : snap.at("records")) {
      index_[r.at("item_id").get<std::string>()] = records_.size();
      records_.push_back(record_from_json(r));
    }
    for (const auto& [token, info] : snap.at("tokens").items()) {
      TokenInfo t;
      t.item_id = info.at("item_id").get<std::string>();
      auto s = info.at("state").get<std::string>();
      t.state = s == "active" ? TokenState::Active
                : s == "used" ? TokenState::Used
                              : TokenState::Expired;
      tokens_[token] = t;
    }
    for (const auto& l : snap.at("leases")) {
      Lease lease;
      lease.token = l.at("lease_token").get<std::string>();
      lease.annotator_id = l.at("annotator_id").get<std::string>();
      lease.expires_at_ms = l.at("expires_at").get<std::int64_t>();
      lease.prior = record_state_from_string(l.at("prior").get<std::string>());
      leases_[index_.at(l.at("item_id").get<std::string>())] = lease;
    }
  } catch (const std::exception& e) {
    throw StoreCorruptError("state.snap is unreadable: " + std::string(e.what()), 0, 0);
  }
  for (std::size_t i = 0; i < records_.size(); ++i) {
    auto s = records_[i].state;
    if (s == RecordState::Queued || s == RecordState::Failed) pending_.insert(i);
  }
}

void Store::replay_log() {
  auto path = dir_ / kLogFile;
  if (!fs::exists(path)) return;
  std::ifstream in(path, std::ios::binary);
  std::string line;
  std::size_t lineno = 0;
  const std::uint64_t snapshot_seq = seq_;
  std::uint64_t last_good = seq_;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto event = json::parse(line);
      auto seq = event.at("seq").get<std::uint64_t>();
      if (seq <= snapshot_seq) continue;  // covered by the snapshot
      if (seq != seq_ + 1) {
        throw ParseError("expected seq " + std::to_string(seq_ + 1) + ", found " +
                             std::to_string(seq),
                         lineno);
      }
      apply(event);
      seq_ = seq;
      last_good = seq;
    } catch (const std::exception& e) {
      throw StoreCorruptError("events.log line " + std::to_string(lineno) +
                                  " is corrupt (" + e.what() +
                                  "); last good seq " + std::to_string(last_good),
                              lineno, last_good);
    }
  }
}

void Store::append(ordered_json event) {
  event["seq"] = seq_ + 1;
  event["ts"] = clock_.now_ms();
  // Reorder so seq, ts, kind lead the record.
  ordered_json out;
  out["seq"] = event["seq"];
  out["ts"] = event["ts"];
  for (auto& [k, v] : event.items()) {
    if (k != "seq" && k != "ts") out[k] = v;
  }
  const auto text = out.dump();
  log_->append_line(text);
  apply(json::parse(text));
  ++seq_;
  if (options_.snapshot_every > 0 && ++since_snapshot_ >= options_.snapshot_every) {
    write_file_atomic(dir_ / kSnapFile, snapshot_json().dump() + "\n");
    since_snapshot_ = 0;
  }
}

void Store::apply(const json& event) {
  const auto kind = event.at("kind").get<std::string>();
  const auto item_id = event.at("item_id").get<std::string>();
  if (kind == "ENQUEUE") {
    if (index_.count(item_id)) return;
    VoteRecord r;
    r.item_id = item_id;
    r.original = label_field(event, "original");
    r.model = model_from_word(event.at("model").get<std::string>());
    r.text = event.value("text", "");
    r.image = event.value("image", "");
    auto outcome = resolve_vote(r.original, r.model, std::nullopt);
    r.state = outcome.state;
    r.final_label = outcome.final_label;
    const auto idx = records_.size();
    index_[item_id] = idx;
    records_.push_back(std::move(r));
    if (!outcome.final_label) pending_.insert(idx);
    return;
  }

  auto it = index_.find(item_id);
  if (it == index_.end()) throw ParseError(kind + " for unknown item '" + item_id + "'", 0);
  const auto idx = it->second;
  auto& rec = records_[idx];
  const auto token = event.at("lease_token").get<std::string>();

  if (kind == "LEASE") {
    if (rec.state != RecordState::Queued && rec.state != RecordState::Failed) {
      throw ParseError("LEASE of item '" + item_id + "' in state " +
                           std::string(to_string(rec.state)),
                       0);
    }
    leases_[idx] = Lease{token, event.at("annotator_id").get<std::string>(),
                         event.at("expires_at").get<std::int64_t>(), rec.state};
    tokens_[token] = TokenInfo{item_id, TokenState::Active};
    rec.state = RecordState::Leased;
    pending_.erase(idx);
  } else if (kind == "EXPIRE") {
    auto lease = leases_.find(idx);
    if (rec.state != RecordState::Leased || lease == leases_.end() ||
        lease->second.token != token) {
      throw ParseError("EXPIRE without a matching lease on '" + item_id + "'", 0);
    }
    rec.state = lease->second.prior;
    leases_.erase(lease);
    tokens_[token].state = TokenState::Expired;
    pending_.insert(idx);
  } else if (kind == "SUBMIT") {
    auto lease = leases_.find(idx);
    if (rec.state != RecordState::Leased || lease == leases_.end() ||
        lease->second.token != token) {
      throw ParseError("SUBMIT without a matching lease on '" + item_id + "'", 0);
    }
    rec.human = label_field(event, "label");
    rec.annotator_id = event.at("annotator_id").get<std::string>();
    rec.elapsed_s = event.at("elapsed_s").get<double>();
    auto outcome = resolve_vote(rec.original, rec.model, rec.human);
    rec.final_label = outcome.final_label;
    rec.state = outcome.state;
    leases_.erase(lease);
    tokens_[token].state = TokenState::Used;
  } else {
    throw ParseError("unknown event kind '" + kind + "'", 0);
  }
}

QueueStats Store::enqueue_disagreements(const Dataset& dataset,
                                        const std::map<std::string, Prediction>& predictions) {
  std::vector<BinaryLabel> originals;
  for (const auto& item : dataset.items) {
    if (!predictions.count(item.item_id)) {
      throw IntegrityError("no model prediction for item '" + item.item_id + "'");
    }
    auto l = task_.parse_word(item.original_label);
    if (!l) {
      throw IntegrityError("item '" + item.item_id + "' label '" + item.original_label +
                           "' is not a word of task '" + task_.task_id + "'");
    }
    originals.push_back(*l);
  }
  std::unique_lock lock(mu_);
  QueueStats stats;
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    const auto& item = dataset.items[i];
    const auto& pred = predictions.at(item.item_id);
    if (!pred.has_label()) {
      ++stats.failed;
    } else if (pred.label == originals[i]) {
      ++stats.agreed;
    } else {
      ++stats.queued;
    }
    if (index_.count(item.item_id)) continue;
    ordered_json e;
    e["kind"] = "ENQUEUE";
    e["item_id"] = item.item_id;
    e["original"] = to_string(originals[i]);
    e["model"] = model_word(pred);
    e["text"] = item.full_text();
    e["image"] = item.image.string();
    append(std::move(e));
    ++stats.added;
  }
  return stats;
}

std::string Store::new_token() {
  ++token_counter_;
  auto a = mix64(token_salt_ ^ mix64(token_counter_));
  auto b = mix64(a ^ static_cast<std::uint64_t>(clock_.now_ms()) ^ seq_);
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(a),
                static_cast<unsigned long long>(b));
  return buf;
}

std::size_t Store::expire_due_locked() {
  const auto now = clock_.now_ms();
  std::vector<std::pair<std::string, std::string>> due;
  for (const auto& [idx, lease] : leases_) {
    if (now >= lease.expires_at_ms) due.emplace_back(records_[idx].item_id, lease.token);
  }
  for (const auto& [item_id, token] : due) {
    ordered_json e;
    e["kind"] = "EXPIRE";
    e["item_id"] = item_id;
    e["lease_token"] = token;
    append(std::move(e));
  }
  return due.size();
}

std::size_t Store::expire_due() {
  std::unique_lock lock(mu_);
  return expire_due_locked();
}

std::optional<LeasedTask> Store::lease_next(const std::string& annotator_id, double ttl_s) {
  if (annotator_id.empty()) throw ValidationError("annotator id must not be empty");
  if (!(ttl_s > 0.0)) throw ValidationError("lease ttl must be positive");
  std::unique_lock lock(mu_);
  expire_due_locked();
  if (pending_.empty()) return std::nullopt;
  const auto idx = *pending_.begin();
  const auto token = new_token();
  const auto expires = clock_.now_ms() + static_cast<std::int64_t>(ttl_s * 1000.0);
  ordered_json e;
  e["kind"] = "LEASE";
  e["item_id"] = records_[idx].item_id;
  e["annotator_id"] = annotator_id;
  e["lease_token"] = token;
  e["expires_at"] = expires;
  append(std::move(e));

  const auto& rec = records_[idx];
  LeasedTask task;
  task.item_id = rec.item_id;
  task.lease_token = token;
  task.expires_at_ms = expires;
  task.text = rec.text;
  task.image = rec.image;
  task.definition_text = task_.definition_text;
  task.candidate_labels = task_.vocabulary();
  return task;
}

VoteOutcome Store::submit_annotation(const AnnotationEvent& event) {
  if (!(event.elapsed_s >= 0.0)) throw ValidationError("elapsed_s must be non-negative");
  if (event.annotator_id.empty()) throw ValidationError("annotator id must not be empty");
  std::unique_lock lock(mu_);
  auto tok = tokens_.find(event.lease_token);
  if (tok == tokens_.end()) throw LeaseError("unknown lease token");
  if (tok->second.item_id != event.item_id) {
    throw LeaseError("lease token does not belong to item '" + event.item_id + "'");
  }
  if (tok->second.state == TokenState::Used) {
    throw ConflictError("annotation for this lease was already recorded");
  }
  if (tok->second.state == TokenState::Expired) throw LeaseExpiredError("lease has expired");
  const auto idx = index_.at(event.item_id);
  const auto now = clock_.now_ms();
  if (now >= leases_.at(idx).expires_at_ms) {
    ordered_json e;
    e["kind"] = "EXPIRE";
    e["item_id"] = event.item_id;
    e["lease_token"] = event.lease_token;
    append(std::move(e));
    throw LeaseExpiredError("lease has expired");
  }
  ordered_json e;
  e["kind"] = "SUBMIT";
  e["item_id"] = event.item_id;
  e["annotator_id"] = event.annotator_id;
  e["lease_token"] = event.lease_token;
  e["label"] = to_string(event.label);
  e["elapsed_s"] = event.elapsed_s;
  e["submitted_at"] = event.submitted_at_ms ? event.submitted_at_ms : now;
  append(std::move(e));
  const auto& rec = records_[idx];
  return VoteOutcome{rec.item_id, rec.final_label, rec.state};
}

std::vector<VoteRecord> Store::records() const {
  std::shared_lock lock(mu_);
  return records_;
}

std::optional<VoteRecord> Store::record(const std::string& item_id) const {
  std::shared_lock lock(mu_);
  auto it = index_.find(item_id);
  if (it == index_.end()) return std::nullopt;
  return records_[it->second];
}

StateCounts Store::counts() const {
  std::shared_lock lock(mu_);
  StateCounts c;
  c.total = records_.size();
  for (const auto& r : records_) {
    switch (r.state) {
      case RecordState::Agreed:
        ++c.agreed;
        break;
      case RecordState::Queued:
        ++c.queued;
        break;
      case RecordState::Leased:
        ++c.leased;
        break;
      case RecordState::Resolved:
        ++c.resolved;
        break;
      case RecordState::Failed:
        ++c.failed;
        break;
    }
    if (!r.model.has_label()) {
      ++c.model_failures;
    } else if (r.model.label != r.original) {
      ++c.disagreements;
    }
  }
  return c;
}

std::uint64_t Store::seq() const {
  std::shared_lock lock(mu_);
  return seq_;
}

json Store::snapshot_json() const {
  json snap;
  snap["seq"] = seq_;
  snap["records"] = json::array();
  for (const auto& r : records_) snap["records"].push_back(record_to_json(r));
  snap["tokens"] = json::object();
  for (const auto& [token, info] : tokens_) {
    snap["tokens"][token] = {{"item_id", info.item_id},
                             {"state", info.state == TokenState::Active ? "active"
                                       : info.state == TokenState::Used ? "used"
                                                                        : "expired"}};
  }
  snap["leases"] = json::array();
  for (const auto& [idx, lease] : leases_) {
    snap["leases"].push_back({{"item_id", records_[idx].item_id},
                              {"lease_token", lease.token},
                              {"annotator_id", lease.annotator_id},
                              {"expires_at", lease.expires_at_ms},
                              {"prior", to_string(lease.prior)}});
  }
  return snap;
}

void Store::write_snapshot() {
  std::unique_lock lock(mu_);
  write_file_atomic(dir_ / kSnapFile, snapshot_json().dump() + "\n");
  since_snapshot_ = 0;
}

}  // namespace xma
