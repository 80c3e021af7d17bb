#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "handpass/csi_frame.hpp"
#include "handpass/dataset.hpp"
#include "handpass/dsp.hpp"
#include "handpass/learners.hpp"
#include "handpass/scaler.hpp"

namespace handpass {

inline constexpr int kStoreVersion = 1;
inline constexpr std::size_t kMinEnrollmentFrames = 100;
inline constexpr double kDefaultThreshold = 0.6;
inline constexpr double kDefaultWindowSeconds = 1.0;

/// Everything needed to turn raw frames into a decision.
struct EnrollmentStore {
  TrainedModel model;
  FittedScaler scaler;
  SubcarrierMask mask;
  SanitizerConfig sanitizer;
  bool prune = true;
  double packets_per_second = 1000;
  std::map<int, std::set<std::string>> roster;  ///< user id -> permissions
  int version = kStoreVersion;
  std::string created_at;  ///< ISO-8601 UTC

  FeatureLayout layout() const { return prune ? FeatureLayout::pruned(mask) : FeatureLayout::full(); }
};

struct EnrollOptions {
  ModelKind model = ModelKind::RandomForest;
  ScalerKind scaler = ScalerKind::MinMax;
  HyperParams hyper;
  std::uint64_t seed = 42;
  double packets_per_second = 1000;
  SanitizerConfig sanitizer;
  bool prune = true;
  /// Granted to every enrolled user.
  std::set<std::string> default_permissions{"access"};
};

/// Fits the scaler and classifier on enrollment rows (label = user id).
/// Throws DegenerateLabels with fewer than two users and TooFewFrames when
/// a user has fewer than kMinEnrollmentFrames rows.
EnrollmentStore enroll(const FeatureMatrix& rows, const EnrollOptions& options = {});

void save_store(const EnrollmentStore& store, const std::filesystem::path& path);
EnrollmentStore load_store(const std::filesystem::path& path);
std::string store_to_string(const EnrollmentStore& store);
EnrollmentStore store_from_string(const std::string& text);

enum class Verdict { Grant, Deny };

struct AuthDecision {
  std::optional<int> user_id;
  double vote_share = 0;
  std::size_t frames_used = 0;
  double window_seconds = 0;
  Verdict decision = Verdict::Deny;
  std::string reason;
  std::int64_t timestamp_us = 0;  ///< set when appended to an audit log

  friend bool operator==(const AuthDecision&, const AuthDecision&) = default;
};

struct AuthRequest {
  double window_seconds = kDefaultWindowSeconds;
  double threshold = kDefaultThreshold;
  /// Empty means roster membership alone suffices.
  std::string required_permission;
};

class AuditLog;

/// Classifies the first ceil(window * rate) frames, takes the modal user and
/// grants iff its vote share reaches the threshold and the user holds the
/// required permission. Throws WindowTooShort and ZeroSignal.
AuthDecision authenticate(const EnrollmentStore& store, std::span<const CsiFrame> frames,
                          const AuthRequest& request = {}, AuditLog* audit = nullptr);

/// Decision rule on precomputed per-frame predictions.
AuthDecision decide(const EnrollmentStore& store, std::span<const int> predictions, const AuthRequest& request);

/// Append-only JSON-lines decision log. Appends are serialized and
/// timestamps strictly increase.
class AuditLog {
 public:
  explicit AuditLog(std::filesystem::path path);

  /// Stamps `decision` and appends it as one line.
  void append(AuthDecision& decision);
  void flush();

  struct ReadResult {
    std::vector<AuthDecision> decisions;
    /// Non-empty when a trailing partial or corrupt line was ignored.
    std::string warning;
  };

  /// Records [first, first + count); count 0 means to the end.
  ReadResult read(std::size_t first = 0, std::size_t count = 0) const;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::int64_t last_timestamp_ = 0;
};

std::string decision_to_json(const AuthDecision& decision);
AuthDecision decision_from_json(const std::string& line);
std::string_view to_string(Verdict verdict);

}  // namespace handpass
