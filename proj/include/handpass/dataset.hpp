#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "handpass/csi_frame.hpp"
#include "handpass/dsp.hpp"

namespace handpass {

enum class Gender { M, F };
enum class Hand { Right, Left };

std::string_view to_string(Gender gender);
std::string_view to_string(Hand hand);
std::optional<Gender> parse_gender(std::string_view text);
std::optional<Hand> parse_hand(std::string_view text);

/// Metadata appended to every feature row.
struct CaptureMeta {
  int capture_number = 1;  ///< 1..5
  Gender gender = Gender::M;
  Hand hand = Hand::Right;
  int user_id = 1;  ///< 1..20

  /// Throws InvalidMeta when a field is out of range.
  void validate() const;

  friend bool operator==(const CaptureMeta&, const CaptureMeta&) = default;
};

inline constexpr Eigen::Index kMetaColumns = 4;
inline constexpr Eigen::Index kFullFeatureColumns = 2 * static_cast<Eigen::Index>(kSubcarriers);

/// Subcarriers that back the feature columns. Columns [0, n) are amplitudes
/// and [n, 2n) are phases (degrees) of the same subcarriers, in order.
struct FeatureLayout {
  std::vector<int> subcarriers;

  static FeatureLayout full();
  static FeatureLayout pruned(const SubcarrierMask& mask);

  Eigen::Index width() const { return 2 * static_cast<Eigen::Index>(subcarriers.size()); }
  Eigen::Index csv_columns() const { return width() + kMetaColumns; }
  int subcarrier_of(Eigen::Index column) const;
  std::vector<std::string> column_names() const;

  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

/// Rows of features plus their metadata. The label of a row is its user id.
struct FeatureMatrix {
  FeatureLayout layout;
  Eigen::MatrixXd features;
  std::vector<CaptureMeta> meta;
  std::vector<int> frame_index;

  Eigen::Index rows() const { return features.rows(); }
  std::vector<int> labels() const;

  /// Appends the rows of `other`; layouts must match.
  void append(const FeatureMatrix& other);
  /// Copies the rows with the given indices, in that order.
  FeatureMatrix select_rows(std::span<const Eigen::Index> indices) const;
};

/// Which stages of the per-frame pipeline run. Disabling stages exists for
/// ablation studies.
struct PipelineOptions {
  SanitizerConfig sanitizer;
  bool prune = true;
  bool normalize = true;
  bool sanitize = true;
};

/// to_cfr -> normalize_cfr -> sanitize_phase -> [amplitude | phase_deg]
/// over the layout's subcarriers. Throws ZeroSignal for a degenerate frame.
Eigen::VectorXd frame_features(const CsiFrame& frame, const FeatureLayout& layout,
                               const SubcarrierMask& mask, const PipelineOptions& options);

struct BuiltRows {
  FeatureMatrix matrix;
  std::size_t dropped_frames = 0;
};

BuiltRows build_rows(std::span<const CsiFrame> frames, const CaptureMeta& meta,
                     const SubcarrierMask& mask, const PipelineOptions& options);

BuiltRows build_rows(const CaptureFile& capture, const CaptureMeta& meta, const SubcarrierMask& mask,
                     const PipelineOptions& options);

// ---------------------------------------------------------------------------
// Slicing

enum class SliceId { D1, D2, D3, D4, D5, D6 };

std::string_view to_string(SliceId id);
std::optional<SliceId> parse_slice_id(std::string_view text);

struct SliceSpec {
  int seconds_per_capture = 1;
  std::vector<int> captures;
};

SliceSpec slice_spec(SliceId id);

struct DatasetSlice {
  SliceId id = SliceId::D1;
  int seconds_per_capture = 1;
  std::vector<int> captures_used;
  FeatureMatrix rows;
};

/// Takes the first ceil(seconds * rate) rows of every required capture of
/// every user, users ascending then captures ascending. Each element of
/// `captures` holds the rows of one capture session.
DatasetSlice slice_dataset(std::span<const FeatureMatrix> captures, SliceId id,
                           double packets_per_second, bool right_hand_only = true);

// ---------------------------------------------------------------------------
// CSV

void write_csv(const FeatureMatrix& rows, const std::filesystem::path& path);
FeatureMatrix read_csv(const std::filesystem::path& path);

/// Plain string table, used for reports.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_table(const CsvTable& table, const std::filesystem::path& path);
CsvTable read_table(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

// ---------------------------------------------------------------------------
// Capture directories: <root>/<user>/<hand>/<capture>.pcap

struct CaptureEntry {
  std::filesystem::path path;
  CaptureMeta meta;
  std::size_t frames = 0;
};

/// Lists captures under `root`, using `<root>/manifest.json` when present
/// and the directory layout otherwise. Sorted by (user, hand, capture);
/// entry paths include `root`.
std::vector<CaptureEntry> scan_capture_directory(const std::filesystem::path& root);

}  // namespace handpass
