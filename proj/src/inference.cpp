#include "xma/inference.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <thread>

#include "xma/errors.hpp"
#include "xma/rng.hpp"
#include "xma/runlog.hpp"

namespace xma {

namespace fs = std::filesystem;

std::string_view to_string(PromptMode mode) {
  return mode == PromptMode::MultiImage ? "multi-image" : "description";
}

PromptMode prompt_mode_from_string(std::string_view s) {
  auto n = normalize_label(s);
  if (n == "multi-image" || n == "multi_image") return PromptMode::MultiImage;
  if (n == "description") return PromptMode::Description;
  throw ConfigError("unknown prompt mode '" + std::string(s) + "'");
}

std::string_view to_string(PredictionStatus status) {
  switch (status) {
    case PredictionStatus::Ok:
      return "ok";
    case PredictionStatus::Unparseable:
      return "unparseable";
    case PredictionStatus::Failed:
      break;
  }
  return "failed";
}

std::string Prediction::render(const TaskDef& task) const {
  switch (status) {
    case PredictionStatus::Ok:
      return task.render(label);
    case PredictionStatus::Unparseable:
      return "UNPARSEABLE";
    case PredictionStatus::Failed:
      break;
  }
  return "PREDICTION_FAILED";
}

Prediction Prediction::parse(std::string_view word, const TaskDef& task) {
  if (word == "UNPARSEABLE") return unparseable();
  if (word == "PREDICTION_FAILED") return failed();
  if (auto l = task.parse_word(word)) return ok(*l);
  throw SchemaError("'" + std::string(word) + "' is neither a word of task '" +
                    task.task_id + "' nor a failure marker");
}

void validate(const EndpointConfig& cfg) {
  if (!(cfg.timeout_s > 0.0)) throw ConfigError("endpoint timeout_s must be > 0");
  if (cfg.max_retries < 0) throw ConfigError("endpoint max_retries must be >= 0");
  if (cfg.backoff_initial_ms < 0 || cfg.backoff_max_ms < cfg.backoff_initial_ms) {
    throw ConfigError("endpoint backoff must satisfy 0 <= initial <= max");
  }
  if (cfg.base_url.rfind("http://", 0) != 0) {
    throw ConfigError("endpoint base_url must be an http:// URL: " + cfg.base_url);
  }
}

AnswerMap AnswerMap::for_task(const TaskDef& task) {
  return AnswerMap{{"yes", task.positive_word}, {"no", task.negative_word}};
}

std::string AnswerMap::render(BinaryLabel label) const {
  return label == BinaryLabel::Positive ? positive_answer : negative_answer;
}

void validate(const AnswerMap& answers) {
  if (answers.positive_words.empty() || answers.negative_words.empty()) {
    throw ConfigError("answer map needs words for both classes");
  }
  for (const auto& w : answers.positive_words) {
    if (answers.negative_words.count(w)) {
      throw ConfigError("answer word '" + w + "' is listed for both classes");
    }
  }
  if (!answers.positive_words.count(answers.positive_answer) ||
      !answers.negative_words.count(answers.negative_answer)) {
    throw ConfigError("rendered answers must be among the class words");
  }
}

namespace {

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-';
}

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

FrameRef image_ref(const MediaItem& meme) {
  return FrameRef{meme.item_id, 0, meme.image, false};
}

std::string inference_question(const TaskDef& task, MediaKind kind) {
  return task.question(kind) + " " + std::string(kAnswerInstruction);
}

void add_image_parts(ordered_json& parts, const std::vector<FrameRef>& vision) {
  for (const auto& f : vision) {
    ordered_json p;
    p["type"] = "image";
    p["path"] = f.path.generic_string();
    p["frame_index"] = f.frame_index;
    if (f.in_container) p["in_container"] = true;
    parts.push_back(std::move(p));
  }
}

void add_text_part(ordered_json& parts, std::string text) {
  ordered_json p;
  p["type"] = "text";
  p["text"] = std::move(text);
  parts.push_back(std::move(p));
}

std::string mime_for(const fs::path& p) {
  auto ext = normalize_label(p.extension().string());
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  if (ext == ".bmp") return "image/bmp";
  return "image/png";
}

std::string data_url(const ordered_json& image_part) {
  if (image_part.value("in_container", false)) {
    throw MediaError("frame " + std::to_string(image_part["frame_index"].get<int>()) +
                     " of " + image_part["path"].get<std::string>() +
                     " must be extracted to an image file before it can be sent");
  }
  fs::path path = image_part["path"].get<std::string>();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MediaError("cannot read image " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return "data:" + mime_for(path) + ";base64," + httplib::detail::base64_encode(bytes);
}

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::vector<Demo> select_demos(const Dataset& video_train, const TaskDef& task,
                               std::size_t n_shots, std::uint64_t seed,
                               const DemoOptions& options) {
  if (n_shots == 0) return {};
  if (n_shots > video_train.items.size()) {
    throw ShortageError("requested " + std::to_string(n_shots) + " demos but '" +
                        video_train.dataset_id + "' has only " +
                        std::to_string(video_train.items.size()) + " items");
  }
  auto labels = binary_labels(video_train, task);
  std::vector<std::size_t> chosen;
  Rng rng(seed);
  if (options.balanced) {
    if (n_shots % 2 != 0) throw ValidationError("balanced demo selection needs an even n_shots");
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      (labels[i] == BinaryLabel::Positive ? pos : neg).push_back(i);
    }
    const auto half = n_shots / 2;
    if (pos.size() < half || neg.size() < half) {
      throw ShortageError("balanced selection of " + std::to_string(n_shots) +
                          " demos needs " + std::to_string(half) +
                          " per class; have " + std::to_string(pos.size()) +
                          " positive and " + std::to_string(neg.size()) + " negative");
    }
    rng.shuffle(std::span(pos));
    rng.shuffle(std::span(neg));
    for (std::size_t i = 0; i < half; ++i) {
      chosen.push_back(pos[i]);
      chosen.push_back(neg[i]);
    }
  } else {
    std::vector<std::size_t> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rng.shuffle(std::span(all));
    chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_shots));
  }

  std::vector<Demo> demos;
  for (auto idx : chosen) {
    const auto& item = video_train.items[idx];
    Demo d;
    d.item_id = item.item_id;
    d.kind = item.kind;
    d.vision = {item.kind == MediaKind::Video ? sample_single_frame(item, seed) : image_ref(item)};
    if (auto it = options.descriptions.find(item.item_id); it != options.descriptions.end()) {
      d.description_text = it->second;
    }
    d.text = item.full_text();
    d.question = inference_question(task, item.kind);
    d.label_word = AnswerMap::for_task(task).render(labels[idx]);
    demos.push_back(std::move(d));
  }
  return demos;
}

PromptBundle build_prompt(const MediaItem& item, const std::vector<Demo>& demos,
                          const TaskDef& task, PromptMode mode, std::uint64_t seed) {
  PromptBundle bundle;
  bundle.task = task;
  bundle.mode = mode;
  for (const auto& src : demos) {
    Demo d = src;
    if (mode == PromptMode::Description) {
      if (!d.description_text) {
        throw ConfigError("demo '" + d.item_id +
                          "' has no description; DESCRIPTION mode needs one for every demo");
      }
      d.vision.clear();
    } else {
      if (d.vision.empty()) throw ConfigError("demo '" + d.item_id + "' has no vision input");
      d.description_text.reset();
    }
    d.question = inference_question(task, d.kind);
    bundle.demos.push_back(std::move(d));
  }
  Demo& q = bundle.query;
  q.item_id = item.item_id;
  q.kind = item.kind;
  q.text = item.full_text();
  q.question = inference_question(task, item.kind);
  if (item.kind == MediaKind::Meme) {
    q.vision = {image_ref(item)};
  } else if (mode == PromptMode::MultiImage) {
    q.vision = {sample_single_frame(item, seed)};
  } else {
    q.vision = sample_k_frames(item, 16);
  }
  check_no_label_leak(bundle);
  return bundle;
}

void check_no_label_leak(const PromptBundle& bundle) {
  if (bundle.query.label_word) {
    throw IntegrityError("query '" + bundle.query.item_id + "' carries a label");
  }
  for (const auto& d : bundle.demos) {
    if (d.item_id == bundle.query.item_id) {
      throw IntegrityError("item '" + d.item_id + "' is both a demo and the query");
    }
  }
}

ordered_json canonical_prompt(const PromptBundle& bundle,
                              std::string_view extra_instruction) {
  ordered_json prompt;
  prompt["task"] = bundle.task.task_id;
  prompt["mode"] = std::string(to_string(bundle.mode));
  prompt["system"] =
      "You are an expert annotator of hateful and offensive content. Judge each item "
      "strictly by this definition. " + bundle.task.definition_text;
  ordered_json parts = ordered_json::array();
  std::size_t i = 0;
  for (const auto& d : bundle.demos) {
    ++i;
    add_image_parts(parts, d.vision);
    std::string text = "Example " + std::to_string(i) + "\n";
    if (d.description_text) text += "Visual description: " + *d.description_text + "\n";
    text += "Text: " + d.text + "\nQuestion: " + d.question +
            "\nAnswer: " + d.label_word.value_or("");
    add_text_part(parts, std::move(text));
  }
  add_image_parts(parts, bundle.query.vision);
  std::string query = "Text: " + bundle.query.text + "\nQuestion: " + bundle.query.question;
  if (!extra_instruction.empty()) query += " " + std::string(extra_instruction);
  query += "\nAnswer:";
  add_text_part(parts, std::move(query));
  prompt["parts"] = std::move(parts);
  return prompt;
}

ordered_json to_chat_request(const PromptBundle& bundle, const EndpointConfig& cfg,
                             std::string_view extra_instruction) {
  auto prompt = canonical_prompt(bundle, extra_instruction);
  ordered_json content = ordered_json::array();
  for (const auto& part : prompt["parts"]) {
    ordered_json p;
    if (part["type"] == "image") {
      p["type"] = "image_url";
      p["image_url"]["url"] = data_url(part);
    } else {
      p["type"] = "text";
      p["text"] = part["text"];
    }
    content.push_back(std::move(p));
  }
  ordered_json body;
  body["model"] = cfg.model_name;
  body["messages"] = ordered_json::array(
      {ordered_json{{"role", "system"}, {"content", prompt["system"]}},
       ordered_json{{"role", "user"}, {"content", std::move(content)}}});
  body["temperature"] = cfg.temperature;
  body["max_tokens"] = cfg.max_tokens;
  return body;
}

std::string prompt_hash(const PromptBundle& bundle, std::string_view model_id,
                        std::string_view extra_instruction) {
  auto text = canonical_prompt(bundle, extra_instruction).dump();
  text += '\0';
  text += model_id;
  return to_hex(stable_hash(text));
}

Prediction parse_label(std::string_view response, const AnswerMap& answers) {
  const auto text = lowercase(response);
  auto lookup = [&](const std::string& w) -> std::optional<Prediction> {
    if (answers.positive_words.count(w)) return Prediction::ok(BinaryLabel::Positive);
    if (answers.negative_words.count(w)) return Prediction::ok(BinaryLabel::Negative);
    return std::nullopt;
  };

  std::size_t start = 0;
  while (start < text.size() && !is_word_char(text[start])) ++start;
  std::size_t end = start;
  while (end < text.size() && is_word_char(text[end])) ++end;
  if (end > start) {
    if (auto p = lookup(text.substr(start, end - start))) return *p;
  }

  std::optional<Prediction> best;
  std::size_t best_pos = std::string::npos;
  std::size_t best_len = 0;
  auto scan = [&](const std::set<std::string>& words, BinaryLabel label) {
    for (const auto& w : words) {
      const auto lw = lowercase(w);
      for (auto pos = text.find(lw); pos != std::string::npos; pos = text.find(lw, pos + 1)) {
        const bool left = pos == 0 || !is_word_char(text[pos - 1]);
        const bool right = pos + lw.size() == text.size() || !is_word_char(text[pos + lw.size()]);
        if (!left || !right) continue;
        if (pos < best_pos || (pos == best_pos && lw.size() > best_len)) {
          best = Prediction::ok(label);
          best_pos = pos;
          best_len = lw.size();
        }
        break;
      }
    }
  };
  scan(answers.positive_words, BinaryLabel::Positive);
  scan(answers.negative_words, BinaryLabel::Negative);
  return best.value_or(Prediction::unparseable());
}

BinaryLabel stub_predict_text(std::string_view text, const std::set<std::string>& lexicon) {
  const auto words = words_of(text);
  for (const auto& term : lexicon) {
    const auto needle = words_of(term);
    if (needle.empty() || needle.size() > words.size()) continue;
    for (std::size_t i = 0; i + needle.size() <= words.size(); ++i) {
      if (std::equal(needle.begin(), needle.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
        return BinaryLabel::Positive;
      }
    }
  }
  return BinaryLabel::Negative;
}

BinaryLabel stub_predict(const MediaItem& item, const std::set<std::string>& lexicon) {
  return stub_predict_text(item.full_text(), lexicon);
}

std::set<std::string> load_lexicon(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read lexicon " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto term = normalize_label(line);
    if (term.empty() || term[0] == '#') continue;
    out.insert(term);
  }
  return out;
}

std::map<std::string, std::string> load_descriptions(const fs::path& path) {
  std::map<std::string, std::string> out;
  for_each_jsonl(path, [&](const json& j, std::size_t line) {
    if (!j.contains("id") || !j.contains("description")) {
      throw ParseError(path.filename().string() + ":" + std::to_string(line) +
                           ": description records need id and description",
                       line);
    }
    out[j["id"].get<std::string>()] = j["description"].get<std::string>();
  });
  return out;
}

EndpointModel::EndpointModel(EndpointConfig cfg) : cfg_(std::move(cfg)) {
  validate(cfg_);
  auto scheme_end = cfg_.base_url.find("://") + 3;
  auto slash = cfg_.base_url.find('/', scheme_end);
  if (slash == std::string::npos) {
    host_ = cfg_.base_url;
  } else {
    host_ = cfg_.base_url.substr(0, slash);
    path_prefix_ = cfg_.base_url.substr(slash);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  }
}

RawResponse EndpointModel::post_once(const std::string& body) {
  ++calls_;
  httplib::Client client(host_);
  const auto secs = static_cast<time_t>(cfg_.timeout_s);
  const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  const auto start = std::chrono::steady_clock::now();
  auto res = client.Post(path_prefix_ + "/v1/chat/completions", headers, body,
                         "application/json");
  const double latency = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start)
                             .count();
  if (!res) {
    const auto err = res.error();
    const auto msg = "endpoint " + cfg_.base_url + ": " + httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      throw TimeoutError(msg);
    }
    throw ConnectivityError(msg);
  }
  if (res->status != 200) {
    throw HttpError("endpoint returned HTTP " + std::to_string(res->status), res->status);
  }
  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::parse_error&) {
    throw MalformedResponseError("endpoint reply is not JSON");
  }
  RawResponse out;
  out.latency_ms = latency;
  try {
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    if (content.is_string()) {
      out.text = content.get<std::string>();
    } else if (content.is_array()) {
      for (const auto& part : content) {
        if (part.value("type", "") == "text") out.text += part.value("text", "");
      }
    } else {
      throw MalformedResponseError("message content has unexpected type");
    }
  } catch (const json::exception&) {
    throw MalformedResponseError("endpoint reply lacks choices[0].message.content");
  }
  if (auto usage = reply.find("usage"); usage != reply.end() && usage->is_object()) {
    out.prompt_tokens = usage->value("prompt_tokens", 0);
    out.completion_tokens = usage->value("completion_tokens", 0);
  }
  return out;
}

RawResponse EndpointModel::complete(const PromptBundle& bundle,
                                    std::string_view extra_instruction) {
  const auto body = to_chat_request(bundle, cfg_, extra_instruction).dump();
  int delay_ms = cfg_.backoff_initial_ms;
  for (int attempt = 0;; ++attempt) {
    try {
      return post_once(body);
    } catch (const EndpointError& e) {
      if (!e.transient() || attempt >= cfg_.max_retries) throw;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    delay_ms = std::min(delay_ms * 2, cfg_.backoff_max_ms);
  }
}

RawResponse StubModel::complete(const PromptBundle& bundle, std::string_view) {
  ++calls_;
  const auto& id = bundle.query.item_id;
  if (fail_ids.count(id)) throw ConnectivityError("stub: simulated outage for " + id);
  if (garble_ids.count(id)) return RawResponse{"I cannot determine.", 0.0, 0, 0};
  auto label = stub_predict_text(bundle.query.text, lexicon_);
  return RawResponse{label == BinaryLabel::Positive ? "yes" : "no", 0.0, 0, 0};
}

RawResponse predict(const PromptBundle& bundle, const EndpointConfig& endpoint) {
  EndpointModel model(endpoint);
  return model.complete(bundle, {});
}

namespace {

struct JobResult {
  ItemPrediction prediction;
  std::vector<RunLogEntry> entries;
};

JobResult run_job(const PredictJob& job, ChatModel& model, const RunLog& log,
                  const AnswerMap& answers, bool use_cache) {
  JobResult result;
  result.prediction.item_id = job.item_id;
  bool all_cached = true;
  for (std::string_view extra : {std::string_view{}, kRetryInstruction}) {
    const auto hash = prompt_hash(job.bundle, model.model_id(), extra);
    RunLogEntry entry{job.item_id, hash, {}, 0.0, {}};
    std::optional<RunLogEntry> cached = use_cache ? log.lookup(hash) : std::nullopt;
    if (cached) {
      entry = *cached;
      entry.item_id = job.item_id;
    } else {
      all_cached = false;
      try {
        auto raw = model.complete(job.bundle, extra);
        entry.response_text = raw.text;
        entry.latency_ms = raw.latency_ms;
      } catch (const EndpointError& e) {
        entry.response_text = e.what();
        entry.status = "failed";
        result.entries.push_back(entry);
        result.prediction.prediction = Prediction::failed();
        result.prediction.response_text = entry.response_text;
        return result;
      }
    }
    auto parsed = parse_label(entry.response_text, answers);
    entry.status = std::string(to_string(parsed.status));
    if (!cached) result.entries.push_back(entry);
    result.prediction.prediction = parsed;
    result.prediction.response_text = entry.response_text;
    if (parsed.has_label()) break;
  }
  result.prediction.from_cache = all_cached;
  return result;
}

}  // namespace

std::vector<ItemPrediction> predict_all(const std::vector<PredictJob>& jobs,
                                        ChatModel& model, RunLog& log,
                                        const AnswerMap& answers,
                                        const BatchOptions& options) {
  validate(answers);
  std::vector<std::optional<JobResult>> results(jobs.size());
  std::mutex mu;
  std::size_t next_commit = 0;
  std::atomic<std::size_t> next_job{0};
  std::exception_ptr failure;

  auto commit_ready = [&] {
    // Caller holds mu.
    while (next_commit < results.size() && results[next_commit]) {
      for (const auto& e : results[next_commit]->entries) log.append(e);
      ++next_commit;
    }
  };

  auto worker = [&] {
    for (;;) {
      const auto i = next_job.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        auto r = run_job(jobs[i], model, log, answers, options.use_cache);
        std::lock_guard lock(mu);
        results[i] = std::move(r);
        commit_ready();
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next_job.store(jobs.size());
        return;
      }
    }
  };

  const auto n_threads = std::max<std::size_t>(
      1, std::min(options.concurrency, jobs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<ItemPrediction> out;
  out.reserve(jobs.size());
  for (auto& r : results) out.push_back(std::move(r->prediction));
  return out;
}

}  // namespace xma
