#include "handpass/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "handpass/error.hpp"

namespace handpass {

std::string_view to_string(Gender gender) { return gender == Gender::M ? "M" : "F"; }
std::string_view to_string(Hand hand) { return hand == Hand::Right ? "Right" : "Left"; }

std::optional<Gender> parse_gender(std::string_view text) {
  if (text == "M" || text == "m") return Gender::M;
  if (text == "F" || text == "f") return Gender::F;
  return std::nullopt;
}

std::optional<Hand> parse_hand(std::string_view text) {
  if (text == "Right" || text == "right" || text == "R") return Hand::Right;
  if (text == "Left" || text == "left" || text == "L") return Hand::Left;
  return std::nullopt;
}

void CaptureMeta::validate() const {
  if (capture_number < 1 || capture_number > 5) {
    throw InvalidMeta("capture number " + std::to_string(capture_number) + " outside 1..5");
  }
  if (user_id < 1 || user_id > 20) {
    throw InvalidMeta("user id " + std::to_string(user_id) + " outside 1..20");
  }
}

// ---------------------------------------------------------------------------

FeatureLayout FeatureLayout::full() {
  FeatureLayout layout;
  for (int k = kLowestSubcarrier; k <= kHighestSubcarrier; ++k) layout.subcarriers.push_back(k);
  return layout;
}

FeatureLayout FeatureLayout::pruned(const SubcarrierMask& mask) { return {mask.useful}; }

int FeatureLayout::subcarrier_of(Eigen::Index column) const {
  const auto n = static_cast<Eigen::Index>(subcarriers.size());
  if (column < 0 || column >= 2 * n) {
    throw DimensionMismatch("feature column " + std::to_string(column) + " outside layout");
  }
  return subcarriers[static_cast<std::size_t>(column % n)];
}

std::vector<std::string> FeatureLayout::column_names() const {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(csv_columns()));
  for (const int k : subcarriers) names.push_back("amp_" + std::to_string(k));
  for (const int k : subcarriers) names.push_back("phase_" + std::to_string(k));
  for (const char* m : {"capture", "gender", "hand", "user_id"}) names.emplace_back(m);
  return names;
}

std::vector<int> FeatureMatrix::labels() const {
  std::vector<int> out;
  out.reserve(meta.size());
  for (const auto& m : meta) out.push_back(m.user_id);
  return out;
}

void FeatureMatrix::append(const FeatureMatrix& other) {
  if (other.rows() == 0) return;
  if (rows() == 0 && features.cols() == 0) {
    *this = other;
    return;
  }
  if (!(layout == other.layout)) throw DimensionMismatch("cannot append rows with a different layout");
  const Eigen::Index old = rows();
  features.conservativeResize(old + other.rows(), Eigen::NoChange);
  features.bottomRows(other.rows()) = other.features;
  meta.insert(meta.end(), other.meta.begin(), other.meta.end());
  frame_index.insert(frame_index.end(), other.frame_index.begin(), other.frame_index.end());
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const Eigen::Index> indices) const {
  FeatureMatrix out;
  out.layout = layout;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.meta.reserve(indices.size());
  out.frame_index.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Eigen::Index r = indices[i];
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(r);
    out.meta.push_back(meta[static_cast<std::size_t>(r)]);
    out.frame_index.push_back(frame_index[static_cast<std::size_t>(r)]);
  }
  return out;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd frame_features(const CsiFrame& frame, const FeatureLayout& layout,
                               const SubcarrierMask& mask, const PipelineOptions& options) {
  CfrVector cfr = to_cfr(frame);
  if (options.normalize) {
    cfr = normalize_cfr(cfr);
  } else if (!(cfr.amplitude.maxCoeff() > 0.0)) {
    throw ZeroSignal("frame has no signal");
  }
  if (options.sanitize) cfr = sanitize_phase(cfr, options.sanitizer, mask);

  const auto n = static_cast<Eigen::Index>(layout.subcarriers.size());
  Eigen::VectorXd out(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = layout.subcarriers[static_cast<std::size_t>(i)];
    out(i) = cfr.amplitude_at(k);
    out(n + i) = cfr.phase_deg_at(k);
  }
  return out;
}

BuiltRows build_rows(std::span<const CsiFrame> frames, const CaptureMeta& meta,
                     const SubcarrierMask& mask, const PipelineOptions& options) {
  meta.validate();
  BuiltRows built;
  FeatureMatrix& m = built.matrix;
  m.layout = options.prune ? FeatureLayout::pruned(mask) : FeatureLayout::full();
  m.features.resize(static_cast<Eigen::Index>(frames.size()), m.layout.width());
  Eigen::Index row = 0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    try {
      m.features.row(row) = frame_features(frames[t], m.layout, mask, options).transpose();
    } catch (const ZeroSignal&) {
      ++built.dropped_frames;
      continue;
    }
    m.meta.push_back(meta);
    m.frame_index.push_back(static_cast<int>(t));
    ++row;
  }
  m.features.conservativeResize(row, Eigen::NoChange);
  return built;
}

BuiltRows build_rows(const CaptureFile& capture, const CaptureMeta& meta, const SubcarrierMask& mask,
                     const PipelineOptions& options) {
  return build_rows(std::span<const CsiFrame>(capture.frames), meta, mask, options);
}

// ---------------------------------------------------------------------------

std::string_view to_string(SliceId id) {
  static constexpr std::string_view kNames[] = {"D1", "D2", "D3", "D4", "D5", "D6"};
  return kNames[static_cast<int>(id)];
}

std::optional<SliceId> parse_slice_id(std::string_view text) {
  for (int i = 0; i < 6; ++i) {
    const auto id = static_cast<SliceId>(i);
    if (text == to_string(id)) return id;
  }
  return std::nullopt;
}

SliceSpec slice_spec(SliceId id) {
  switch (id) {
    case SliceId::D1:
      return {1, {1}};
    case SliceId::D2:
      return {1, {1, 2, 3}};
    case SliceId::D3:
      return {1, {1, 2, 3, 4, 5}};
    case SliceId::D4:
      return {5, {1}};
    case SliceId::D5:
      return {5, {1, 2, 3}};
    case SliceId::D6:
      return {5, {1, 2, 3, 4, 5}};
  }
  return {1, {1}};
}

DatasetSlice slice_dataset(std::span<const FeatureMatrix> captures, SliceId id,
                           double packets_per_second, bool right_hand_only) {
  const SliceSpec spec = slice_spec(id);
  const auto needed = static_cast<Eigen::Index>(std::ceil(spec.seconds_per_capture * packets_per_second));

  // (user, capture) -> capture rows; the first matching session wins.
  std::map<std::pair<int, int>, const FeatureMatrix*> sessions;
  std::vector<int> users;
  for (const FeatureMatrix& c : captures) {
    if (c.rows() == 0) continue;
    const CaptureMeta& m = c.meta.front();
    if (right_hand_only && m.hand != Hand::Right) continue;
    sessions.emplace(std::make_pair(m.user_id, m.capture_number), &c);
    users.push_back(m.user_id);
  }
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  if (users.empty()) throw InsufficientRows("no captures available for slicing");

  DatasetSlice slice;
  slice.id = id;
  slice.seconds_per_capture = spec.seconds_per_capture;
  slice.captures_used = spec.captures;
  slice.rows.layout = sessions.begin()->second->layout;

  std::vector<const FeatureMatrix*> chosen;
  for (const int user : users) {
    for (const int capture : spec.captures) {
      const auto it = sessions.find({user, capture});
      if (it == sessions.end()) {
        throw InsufficientRows("user " + std::to_string(user) + " has no capture " +
                               std::to_string(capture) + " for slice " + std::string(to_string(id)));
      }
      if (it->second->rows() < needed) {
        throw InsufficientRows("user " + std::to_string(user) + " capture " + std::to_string(capture) +
                               " has " + std::to_string(it->second->rows()) + " rows, slice " +
                               std::string(to_string(id)) + " needs " + std::to_string(needed));
      }
      chosen.push_back(it->second);
    }
  }

  FeatureMatrix& out = slice.rows;
  out.features.resize(needed * static_cast<Eigen::Index>(chosen.size()), out.layout.width());
  out.meta.reserve(static_cast<std::size_t>(out.features.rows()));
  out.frame_index.reserve(static_cast<std::size_t>(out.features.rows()));
  Eigen::Index row = 0;
  for (const FeatureMatrix* c : chosen) {
    if (!(c->layout == out.layout)) throw DimensionMismatch("captures have different layouts");
    out.features.middleRows(row, needed) = c->features.topRows(needed);
    out.meta.insert(out.meta.end(), c->meta.begin(), c->meta.begin() + needed);
    out.frame_index.insert(out.frame_index.end(), c->frame_index.begin(), c->frame_index.begin() + needed);
    row += needed;
  }
  return slice;
}

// ---------------------------------------------------------------------------

std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

namespace {

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string_view chomp(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  return line;
}

double parse_double(std::string_view field, std::size_t line_no) {
  double value = 0;
  const auto result = std::from_chars(field.data(), field.data() + field.size(), value);
  if (result.ec != std::errc() || result.ptr != field.data() + field.size()) {
    throw RaggedRows("line " + std::to_string(line_no) + ": '" + std::string(field) + "' is not a number");
  }
  return value;
}

int parse_int(std::string_view field, std::size_t line_no) {
  int value = 0;
  const auto result = std::from_chars(field.data(), field.data() + field.size(), value);
  if (result.ec != std::errc() || result.ptr != field.data() + field.size()) {
    throw RaggedRows("line " + std::to_string(line_no) + ": '" + std::string(field) + "' is not an integer");
  }
  return value;
}

FeatureLayout layout_from_header(const std::vector<std::string_view>& header) {
  if (header.size() < static_cast<std::size_t>(kMetaColumns) ||
      (header.size() - kMetaColumns) % 2 != 0) {
    throw RaggedRows("CSV header has " + std::to_string(header.size()) + " columns");
  }
  const std::size_t n = (header.size() - kMetaColumns) / 2;
  FeatureLayout layout;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string_view amp = header[i];
    const std::string_view phase = header[n + i];
    if (!amp.starts_with("amp_") || !phase.starts_with("phase_") ||
        amp.substr(4) != phase.substr(6)) {
      throw RaggedRows("unexpected CSV column names '" + std::string(amp) + "', '" + std::string(phase) + "'");
    }
    layout.subcarriers.push_back(parse_int(amp.substr(4), 1));
  }
  return layout;
}

}  // namespace

void write_csv(const FeatureMatrix& rows, const std::filesystem::path& path) {
  if (rows.features.cols() != rows.layout.width() && rows.rows() > 0) {
    throw DimensionMismatch("feature matrix width does not match its layout");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoFailure("cannot create " + path.string());
  const auto names = rows.layout.column_names();
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << '\n';
  std::string line;
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    line.clear();
    for (Eigen::Index c = 0; c < rows.features.cols(); ++c) {
      line += format_double(rows.features(r, c));
      line += ',';
    }
    const CaptureMeta& m = rows.meta[static_cast<std::size_t>(r)];
    line += std::to_string(m.capture_number);
    line += ',';
    line += to_string(m.gender);
    line += ',';
    line += to_string(m.hand);
    line += ',';
    line += std::to_string(m.user_id);
    out << line << '\n';
  }
  if (!out) throw IoFailure("write error on " + path.string());
}

FeatureMatrix read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw RaggedRows(path.string() + " has no header");
  const std::string header_line(chomp(line));
  FeatureMatrix m;
  m.layout = layout_from_header(split_line(header_line));
  const auto width = static_cast<std::size_t>(m.layout.width());
  const std::size_t columns = width + kMetaColumns;

  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = chomp(line);
    if (view.empty()) continue;
    const auto fields = split_line(view);
    if (fields.size() != columns) {
      throw RaggedRows("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(columns));
    }
    for (std::size_t i = 0; i < width; ++i) values.push_back(parse_double(fields[i], line_no));
    CaptureMeta meta;
    meta.capture_number = parse_int(fields[width], line_no);
    const auto gender = parse_gender(fields[width + 1]);
    const auto hand = parse_hand(fields[width + 2]);
    if (!gender || !hand) throw RaggedRows("line " + std::to_string(line_no) + " has bad gender/hand");
    meta.gender = *gender;
    meta.hand = *hand;
    meta.user_id = parse_int(fields[width + 3], line_no);
    m.meta.push_back(meta);
    m.frame_index.push_back(static_cast<int>(m.meta.size() - 1));
  }
  const auto rows = static_cast<Eigen::Index>(m.meta.size());
  m.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, static_cast<Eigen::Index>(width));
  return m;
}

void write_table(const CsvTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoFailure("cannot create " + path.string());
  auto emit = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << fields[i];
    out << '\n';
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
  if (!out) throw IoFailure("write error on " + path.string());
}

CsvTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw RaggedRows(path.string() + " has no header");
  for (const auto f : split_line(chomp(line))) table.header.emplace_back(f);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = chomp(line);
    if (view.empty()) continue;
    std::vector<std::string> row;
    for (const auto f : split_line(view)) row.emplace_back(f);
    if (row.size() != table.header.size()) {
      throw RaggedRows("line " + std::to_string(line_no) + " has " + std::to_string(row.size()) + " fields");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------

std::vector<CaptureEntry> scan_capture_directory(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::vector<CaptureEntry> entries;
  const fs::path manifest_path = root / "manifest.json";
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    if (!in) throw IoFailure("cannot open " + manifest_path.string());
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
      for (const auto& c : doc.at("captures")) {
        CaptureEntry e;
        e.path = root / c.at("path").get<std::string>();
        e.meta.capture_number = c.at("capture").get<int>();
        e.meta.user_id = c.at("user_id").get<int>();
        const auto gender = parse_gender(c.at("gender").get<std::string>());
        const auto hand = parse_hand(c.at("hand").get<std::string>());
        if (!gender || !hand) throw InvalidMeta("manifest entry has bad gender/hand");
        e.meta.gender = *gender;
        e.meta.hand = *hand;
        e.frames = c.value("frames", std::size_t{0});
        e.meta.validate();
        entries.push_back(std::move(e));
      }
    } catch (const nlohmann::json::exception& ex) {
      throw InvalidMeta("malformed manifest " + manifest_path.string() + ": " + ex.what());
    }
  } else {
    if (!fs::is_directory(root)) throw IoFailure(root.string() + " is not a directory");
    for (const auto& user_dir : fs::directory_iterator(root)) {
      if (!user_dir.is_directory()) continue;
      int user_id = 0;
      const std::string user_name = user_dir.path().filename().string();
      if (std::from_chars(user_name.data(), user_name.data() + user_name.size(), user_id).ec != std::errc()) {
        continue;
      }
      Gender gender = Gender::M;
      if (std::ifstream g(user_dir.path() / "gender"); g) {
        std::string text;
        g >> text;
        if (const auto parsed = parse_gender(text)) gender = *parsed;
      }
      for (const auto& hand_dir : fs::directory_iterator(user_dir.path())) {
        if (!hand_dir.is_directory()) continue;
        const auto hand = parse_hand(hand_dir.path().filename().string());
        if (!hand) continue;
        for (const auto& file : fs::directory_iterator(hand_dir.path())) {
          if (file.path().extension() != ".pcap") continue;
          const std::string stem = file.path().stem().string();
          int capture = 0;
          if (std::from_chars(stem.data(), stem.data() + stem.size(), capture).ec != std::errc()) continue;
          CaptureEntry e;
          e.path = file.path();
          e.meta = {capture, gender, *hand, user_id};
          e.meta.validate();
          entries.push_back(std::move(e));
        }
      }
    }
  }
  std::sort(entries.begin(), entries.end(), [](const CaptureEntry& a, const CaptureEntry& b) {
    return std::tie(a.meta.user_id, a.meta.hand, a.meta.capture_number) <
           std::tie(b.meta.user_id, b.meta.hand, b.meta.capture_number);
  });
  return entries;
}

}  // namespace handpass
