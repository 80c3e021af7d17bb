#include "handpass/gatekeeper.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "handpass/error.hpp"

namespace handpass {
namespace {

using nlohmann::json;

std::string utc_now_iso8601() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::int64_t now_us() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

json scaler_to_json(const FittedScaler& s) {
  std::vector<double> row0(s.parameters.row(0).begin(), s.parameters.row(0).end());
  std::vector<double> row1(s.parameters.row(1).begin(), s.parameters.row(1).end());
  return {{"kind", std::string(to_string(s.kind))}, {"param0", row0}, {"param1", row1}};
}

FittedScaler scaler_from_json(const json& j) {
  FittedScaler s;
  const auto kind = parse_scaler_kind(j.at("kind").get<std::string>());
  if (!kind) throw BadModelDocument("unknown scaler kind");
  s.kind = *kind;
  const auto row0 = j.at("param0").get<std::vector<double>>();
  const auto row1 = j.at("param1").get<std::vector<double>>();
  if (row0.size() != row1.size()) throw BadModelDocument("scaler parameter rows differ in length");
  s.parameters.resize(2, static_cast<Eigen::Index>(row0.size()));
  for (std::size_t i = 0; i < row0.size(); ++i) {
    s.parameters(0, static_cast<Eigen::Index>(i)) = row0[i];
    s.parameters(1, static_cast<Eigen::Index>(i)) = row1[i];
  }
  return s;
}

}  // namespace

std::string_view to_string(Verdict verdict) { return verdict == Verdict::Grant ? "Grant" : "Deny"; }

EnrollmentStore enroll(const FeatureMatrix& rows, const EnrollOptions& options) {
  std::map<int, std::size_t> per_user;
  for (const auto& m : rows.meta) ++per_user[m.user_id];
  if (per_user.size() < 2) {
    throw DegenerateLabels("enrollment needs at least two users, got " + std::to_string(per_user.size()));
  }
  for (const auto& [user, count] : per_user) {
    if (count < kMinEnrollmentFrames) {
      throw TooFewFrames("user " + std::to_string(user) + " has " + std::to_string(count) +
                         " enrollment frames, need " + std::to_string(kMinEnrollmentFrames));
    }
  }
  const FeatureLayout expected =
      options.prune ? FeatureLayout::pruned(SubcarrierMask::vht80()) : FeatureLayout::full();
  if (!(rows.layout == expected)) {
    throw DimensionMismatch("enrollment rows do not match the configured feature layout");
  }

  EnrollmentStore store;
  store.mask = SubcarrierMask::vht80();
  store.sanitizer = options.sanitizer;
  store.prune = options.prune;
  store.packets_per_second = options.packets_per_second;
  store.scaler = fit_scaler(options.scaler, rows.features);
  const Eigen::MatrixXd scaled = apply_scaler(store.scaler, rows.features);
  store.model = train(options.model, scaled, rows.labels(), options.hyper, options.seed);
  for (const auto& [user, count] : per_user) store.roster[user] = options.default_permissions;
  store.created_at = utc_now_iso8601();
  return store;
}

std::string store_to_string(const EnrollmentStore& store) {
  json roster = json::array();
  for (const auto& [user, perms] : store.roster) {
    roster.push_back({{"user_id", user}, {"permissions", std::vector<std::string>(perms.begin(), perms.end())}});
  }
  const json doc = {{"schema", "handpass.store"},
                    {"version", store.version},
                    {"created_at", store.created_at},
                    {"prune", store.prune},
                    {"packets_per_second", store.packets_per_second},
                    {"sanitizer", {{"lambda", store.sanitizer.lambda}, {"unwrap", store.sanitizer.unwrap}}},
                    {"mask", {{"null", store.mask.null_indices}, {"pilot", store.mask.pilot_indices}}},
                    {"scaler", scaler_to_json(store.scaler)},
                    {"roster", roster},
                    {"model", json::parse(save_model_string(store.model))}};
  return doc.dump();
}

EnrollmentStore store_from_string(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("schema").get<std::string>() != "handpass.store") throw BadModelDocument("not a handpass store");
    EnrollmentStore store;
    store.version = doc.at("version").get<int>();
    if (store.version != kStoreVersion) {
      throw BadModelDocument("unsupported store version " + std::to_string(store.version));
    }
    store.created_at = doc.at("created_at").get<std::string>();
    store.prune = doc.at("prune").get<bool>();
    store.packets_per_second = doc.at("packets_per_second").get<double>();
    store.sanitizer.lambda = doc.at("sanitizer").at("lambda").get<double>();
    store.sanitizer.unwrap = doc.at("sanitizer").at("unwrap").get<bool>();
    store.mask = SubcarrierMask::from_excluded(doc.at("mask").at("null").get<std::vector<int>>(),
                                               doc.at("mask").at("pilot").get<std::vector<int>>());
    store.scaler = scaler_from_json(doc.at("scaler"));
    for (const auto& r : doc.at("roster")) {
      const auto perms = r.at("permissions").get<std::vector<std::string>>();
      store.roster[r.at("user_id").get<int>()] = std::set<std::string>(perms.begin(), perms.end());
    }
    store.model = load_model_string(doc.at("model").dump());
    for (const auto& [user, perms] : store.roster) {
      if (!std::binary_search(store.model.classes.begin(), store.model.classes.end(), user)) {
        throw BadModelDocument("roster user " + std::to_string(user) + " is not a model class");
      }
    }
    if (store.scaler.features() != store.layout().width() || store.model.n_features != store.layout().width()) {
      throw BadModelDocument("store scaler/model width does not match its feature layout");
    }
    return store;
  } catch (const json::exception& ex) {
    throw BadModelDocument(std::string("malformed store document: ") + ex.what());
  }
}

void save_store(const EnrollmentStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoFailure("cannot create " + path.string());
  out << store_to_string(store) << '\n';
  if (!out) throw IoFailure("write error on " + path.string());
}

EnrollmentStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return store_from_string(buf.str());
}

// ---------------------------------------------------------------------------

AuthDecision decide(const EnrollmentStore& store, std::span<const int> predictions, const AuthRequest& request) {
  AuthDecision d;
  d.frames_used = predictions.size();
  d.window_seconds = request.window_seconds;
  if (predictions.empty()) {
    d.reason = "no usable frames";
    return d;
  }
  std::map<int, std::size_t> votes;
  for (const int p : predictions) ++votes[p];
  auto modal = votes.begin();
  for (auto it = votes.begin(); it != votes.end(); ++it) {
    if (it->second > modal->second) modal = it;
  }
  d.user_id = modal->first;
  d.vote_share = static_cast<double>(modal->second) / static_cast<double>(predictions.size());

  const auto entry = store.roster.find(modal->first);
  if (entry == store.roster.end()) {
    d.reason = "not enrolled";
  } else if (d.vote_share < request.threshold) {
    d.reason = "below threshold";
  } else if (!request.required_permission.empty() && !entry->second.contains(request.required_permission)) {
    d.reason = "missing permission";
  } else {
    d.decision = Verdict::Grant;
    d.reason = "granted";
  }
  return d;
}

AuthDecision authenticate(const EnrollmentStore& store, std::span<const CsiFrame> frames,
                          const AuthRequest& request, AuditLog* audit) {
  if (!(request.window_seconds > 0)) throw WindowTooShort("window must be positive");
  const auto needed = static_cast<std::size_t>(std::ceil(request.window_seconds * store.packets_per_second - 1e-9));
  if (frames.size() < needed || needed == 0) {
    throw WindowTooShort(std::to_string(frames.size()) + " frames do not cover a " +
                         std::to_string(request.window_seconds) + " s window (" + std::to_string(needed) +
                         " needed)");
  }
  const FeatureLayout layout = store.layout();
  PipelineOptions pipeline;
  pipeline.sanitizer = store.sanitizer;
  pipeline.prune = store.prune;
  Eigen::MatrixXd features(static_cast<Eigen::Index>(needed), layout.width());
  Eigen::Index usable = 0;
  for (std::size_t t = 0; t < needed; ++t) {
    try {
      features.row(usable) = frame_features(frames[t], layout, store.mask, pipeline).transpose();
      ++usable;
    } catch (const ZeroSignal&) {
    }
  }
  if (usable == 0) throw ZeroSignal("every frame in the window is degenerate");
  features.conservativeResize(usable, Eigen::NoChange);
  const std::vector<int> predictions = predict(store.model, apply_scaler(store.scaler, features));
  AuthDecision decision = decide(store, predictions, request);
  if (audit) audit->append(decision);
  return decision;
}

// ---------------------------------------------------------------------------

std::string decision_to_json(const AuthDecision& d) {
  json j = {{"ts_us", d.timestamp_us},
            {"user_id", d.user_id ? json(*d.user_id) : json(nullptr)},
            {"vote_share", d.vote_share},
            {"frames_used", d.frames_used},
            {"window_seconds", d.window_seconds},
            {"decision", std::string(to_string(d.decision))},
            {"reason", d.reason}};
  return j.dump();
}

AuthDecision decision_from_json(const std::string& line) {
  try {
    const json j = json::parse(line);
    AuthDecision d;
    d.timestamp_us = j.at("ts_us").get<std::int64_t>();
    if (!j.at("user_id").is_null()) d.user_id = j.at("user_id").get<int>();
    d.vote_share = j.at("vote_share").get<double>();
    d.frames_used = j.at("frames_used").get<std::size_t>();
    d.window_seconds = j.at("window_seconds").get<double>();
    const auto verdict = j.at("decision").get<std::string>();
    if (verdict != "Grant" && verdict != "Deny") throw BadModelDocument("unknown decision " + verdict);
    d.decision = verdict == "Grant" ? Verdict::Grant : Verdict::Deny;
    d.reason = j.at("reason").get<std::string>();
    return d;
  } catch (const json::exception& ex) {
    throw BadModelDocument(std::string("malformed decision record: ") + ex.what());
  }
}

AuditLog::AuditLog(std::filesystem::path path) : path_(std::move(path)) {
  const ReadResult existing = read();
  if (!existing.decisions.empty()) last_timestamp_ = existing.decisions.back().timestamp_us;
}

void AuditLog::append(AuthDecision& decision) {
  std::lock_guard lock(mutex_);
  decision.timestamp_us = std::max(now_us(), last_timestamp_ + 1);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoFailure("cannot open audit log " + path_.string());
  out << decision_to_json(decision) << '\n';
  out.flush();
  if (!out) throw IoFailure("write error on audit log " + path_.string());
  last_timestamp_ = decision.timestamp_us;
}

void AuditLog::flush() {
  // Every append opens, writes and flushes the file; nothing is buffered here.
  std::lock_guard lock(mutex_);
}

AuditLog::ReadResult AuditLog::read(std::size_t first, std::size_t count) const {
  std::lock_guard lock(mutex_);
  ReadResult result;
  std::ifstream in(path_, std::ios::binary);
  if (!in) return result;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t index = 0;
  std::size_t start = 0;
  while (start < content.size()) {
    const std::size_t end = content.find('\n', start);
    if (end == std::string::npos) {
      result.warning = "ignored trailing partial record at byte " + std::to_string(start);
      break;
    }
    const std::string line = content.substr(start, end - start);
    start = end + 1;
    AuthDecision d;
    try {
      d = decision_from_json(line);
    } catch (const BadModelDocument&) {
      result.warning = "stopped at corrupt record " + std::to_string(index);
      break;
    }
    if (index >= first && (count == 0 || result.decisions.size() < count)) result.decisions.push_back(d);
    ++index;
  }
  return result;
}

}  // namespace handpass
