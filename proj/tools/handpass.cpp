// handpass: command-line entry point.
//
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "handpass/csi_frame.hpp"
#include "handpass/dataset.hpp"
#include "handpass/error.hpp"
#include "handpass/gatekeeper.hpp"
#include "handpass/learners.hpp"
#include "handpass/scaler.hpp"
#include "handpass/service.hpp"
#include "handpass/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace handpass;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 42;
  int verbosity = 0;
};

const std::vector<std::string> kModelNames{"rf", "dt", "knn", "nb", "svm"};
const std::vector<std::string> kScalerNames{"minmax", "zscore", "robust"};
const std::vector<std::string> kSliceNames{"D1", "D2", "D3", "D4", "D5", "D6"};

void print_config(std::string_view command, const json& config) {
  json doc = config;
  doc["command"] = command;
  std::cerr << "config " << doc.dump() << '\n';
}

void log(const Globals& g, const std::string& line) {
  if (g.verbosity > 0) std::cerr << line << '\n';
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

// Prints rows as left-aligned columns.
void print_table(const CsvTable& table) {
  std::vector<std::size_t> width(table.header.size(), 0);
  for (std::size_t c = 0; c < width.size(); ++c) width[c] = table.header[c].size();
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out += cells[c];
      if (c + 1 < cells.size()) out += std::string(width[c] - cells[c].size() + 2, ' ');
    }
    std::cout << out << '\n';
  };
  line(table.header);
  for (const auto& row : table.rows) line(row);
  std::cout.flush();
}

double manifest_rate(const fs::path& dir, double fallback) {
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) return fallback;
  return read_manifest(manifest).config.packets_per_second;
}

// Builds one feature matrix per capture session found under `dir`.
std::vector<FeatureMatrix> load_sessions(const Globals& g, const fs::path& dir, const PipelineOptions& pipeline,
                                         bool right_hand_only, std::size_t max_frames = 0) {
  const SubcarrierMask mask = SubcarrierMask::vht80();
  std::vector<FeatureMatrix> sessions;
  for (const CaptureEntry& entry : scan_capture_directory(dir)) {
    if (right_hand_only && entry.meta.hand != Hand::Right) continue;
    CaptureFile capture = read_capture(entry.path);
    if (max_frames > 0 && capture.frames.size() > max_frames) capture.frames.resize(max_frames);
    BuiltRows built = build_rows(capture, entry.meta, mask, pipeline);
    log(g, "read " + entry.path.string() + ": " + std::to_string(built.matrix.rows()) + " rows, " +
               std::to_string(built.dropped_frames) + " dropped, " + std::to_string(capture.bad_payloads) +
               " bad payloads");
    sessions.push_back(std::move(built.matrix));
  }
  if (sessions.empty()) throw InsufficientRows("no captures found under " + dir.string());
  return sessions;
}

FeatureMatrix concatenate(std::vector<FeatureMatrix>& parts) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  FeatureMatrix out;
  out.layout = parts.front().layout;
  out.features.resize(rows, out.layout.width());
  Eigen::Index at = 0;
  for (auto& p : parts) {
    if (!(p.layout == out.layout)) throw DimensionMismatch("sessions have different layouts");
    out.features.middleRows(at, p.rows()) = p.features;
    out.meta.insert(out.meta.end(), p.meta.begin(), p.meta.end());
    out.frame_index.insert(out.frame_index.end(), p.frame_index.begin(), p.frame_index.end());
    at += p.rows();
  }
  return out;
}

std::string resolve_store(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("HANDPASS_STORE"); env != nullptr && *env != '\0') return env;
  throw UsageError("no store given: pass --store or set HANDPASS_STORE");
}

json hyper_json(const HyperParams& h) {
  return {{"n_trees", h.n_trees},         {"max_features", h.max_features}, {"max_depth", h.max_depth},
          {"k_neighbors", h.k_neighbors}, {"svm_epochs", h.svm_epochs},     {"threads", h.threads}};
}

void add_hyper_options(CLI::App* cmd, HyperParams& hyper) {
  cmd->add_option("--trees", hyper.n_trees, "Trees in a random forest")->check(CLI::PositiveNumber);
  cmd->add_option("--max-depth", hyper.max_depth, "Tree depth limit (0 = unlimited)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--neighbors", hyper.k_neighbors, "k for KNN")->check(CLI::PositiveNumber);
  cmd->add_option("--threads", hyper.threads, "Worker threads for forest training")->check(CLI::PositiveNumber);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  SynthConfig cfg;
};

int run_synth(const Globals& g, SynthArgs& a) {
  a.cfg.seed = g.seed;
  a.cfg.validate();
  print_config("synth", {{"out", a.out},
                         {"users", a.cfg.users},
                         {"captures", a.cfg.captures_per_user},
                         {"frames", a.cfg.frames_per_capture},
                         {"rate", a.cfg.packets_per_second},
                         {"noise", a.cfg.noise_sigma},
                         {"interference_rate", a.cfg.interference_rate},
                         {"interference_gain", a.cfg.interference_gain},
                         {"both_hands", a.cfg.both_hands},
                         {"seed", a.cfg.seed}});
  const Manifest manifest = generate(a.cfg, a.out);
  std::size_t frames = 0;
  for (const auto& e : manifest.captures) frames += e.frames;
  std::cout << "wrote " << manifest.captures.size() << " captures (" << frames << " frames) to " << a.out << '\n';
  return kExitOk;
}

struct DatasetArgs {
  std::string in;
  std::string slice = "D1";
  std::string scaler = "minmax";
  bool prune = true;
  bool all_hands = false;
  std::optional<double> rate;
  std::string out;
};

int run_dataset(const Globals& g, const DatasetArgs& a) {
  const double rate = a.rate.value_or(manifest_rate(a.in, 1000));
  print_config("dataset", {{"in", a.in},
                           {"slice", a.slice},
                           {"scaler", a.scaler},
                           {"prune", a.prune},
                           {"right_hand_only", !a.all_hands},
                           {"rate", rate},
                           {"out", a.out}});
  PipelineOptions pipeline;
  pipeline.prune = a.prune;
  const auto sessions = load_sessions(g, a.in, pipeline, !a.all_hands);
  DatasetSlice slice = slice_dataset(sessions, *parse_slice_id(a.slice), rate, !a.all_hands);
  if (a.scaler != "none") {
    const FittedScaler scaler = fit_scaler(*parse_scaler_kind(a.scaler), slice.rows.features);
    slice.rows.features = apply_scaler(scaler, slice.rows.features);
  }
  write_csv(slice.rows, a.out);
  std::cout << "wrote " << slice.rows.rows() << " rows x " << slice.rows.layout.csv_columns() << " columns to "
            << a.out << '\n';
  return kExitOk;
}

struct CrossvalArgs {
  std::vector<std::string> data;
  std::vector<std::string> models{"rf"};
  int k = 10;
  std::string fold_scaler;
  std::string report;
  std::string f1_table;
  HyperParams hyper;
};

int run_crossval(const Globals& g, const CrossvalArgs& a) {
  print_config("crossval", {{"data", a.data},
                            {"models", a.models},
                            {"k", a.k},
                            {"seed", g.seed},
                            {"fold_scaler", a.fold_scaler.empty() ? json(nullptr) : json(a.fold_scaler)},
                            {"hyper", hyper_json(a.hyper)},
                            {"report", a.report},
                            {"f1_table", a.f1_table}});
  CsvTable report{{"dataset", "classifier", "accuracy", "precision", "recall", "f1_score", "folds", "rows"}, {}};
  CsvTable f1{{"dataset"}, {}};
  for (const auto& m : a.models) f1.header.push_back(std::string(display_name(*parse_model_kind(m))));

  for (const auto& path : a.data) {
    const FeatureMatrix rows = read_csv(path);
    const std::vector<int> labels = rows.labels();
    const std::string name = fs::path(path).stem().string();
    std::vector<std::string> f1_row{name};
    for (const auto& m : a.models) {
      CvOptions options;
      options.folds = a.k;
      options.seed = g.seed;
      options.hyper = a.hyper;
      if (!a.fold_scaler.empty()) options.fold_scaler = parse_scaler_kind(a.fold_scaler);
      const auto t0 = std::chrono::steady_clock::now();
      const CvReport cv = cross_validate(*parse_model_kind(m), rows.features, labels, options);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log(g, name + " " + m + ": " + fixed(seconds, 1) + " s");
      report.rows.push_back({name, std::string(display_name(cv.kind)), fixed(cv.mean.accuracy),
                             fixed(cv.mean.precision), fixed(cv.mean.recall), fixed(cv.mean.f1),
                             std::to_string(a.k), std::to_string(rows.rows())});
      f1_row.push_back(fixed(cv.mean.f1));
    }
    f1.rows.push_back(std::move(f1_row));
  }
  print_table(report);
  if (!a.report.empty()) write_table(report, a.report);
  if (!a.f1_table.empty()) write_table(f1, a.f1_table);
  return kExitOk;
}

struct SelectArgs {
  std::string data;
  int top = 20;
  std::string out;
  HyperParams hyper;
};

int run_select(const Globals& g, const SelectArgs& a) {
  print_config("select", {{"data", a.data}, {"top", a.top}, {"seed", g.seed}, {"hyper", hyper_json(a.hyper)}});
  const FeatureMatrix rows = read_csv(a.data);
  const TrainedModel model = train(ModelKind::RandomForest, rows.features, rows.labels(), a.hyper, g.seed);
  const Eigen::VectorXd importance = feature_importance(model);
  const std::vector<int> chosen = select_subcarriers(importance, rows.layout, a.top);

  std::map<int, double> per_subcarrier;
  for (Eigen::Index c = 0; c < importance.size(); ++c) {
    per_subcarrier[rows.layout.subcarrier_of(c)] += importance(c);
  }
  CsvTable table{{"rank", "subcarrier", "importance"}, {}};
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    table.rows.push_back({std::to_string(i + 1), std::to_string(chosen[i]), fixed(per_subcarrier[chosen[i]], 6)});
  }
  print_table(table);
  if (!a.out.empty()) write_table(table, a.out);
  return kExitOk;
}

struct EnrollArgs {
  std::string in;
  std::string store;
  std::string model = "rf";
  std::string scaler = "minmax";
  std::size_t frames = 0;
  std::vector<std::string> permissions{"access"};
  std::optional<double> rate;
  bool prune = true;
  HyperParams hyper;
};

int run_enroll(const Globals& g, const EnrollArgs& a) {
  const std::string store_path = resolve_store(a.store);
  EnrollOptions options;
  options.model = *parse_model_kind(a.model);
  options.scaler = *parse_scaler_kind(a.scaler);
  options.hyper = a.hyper;
  options.seed = g.seed;
  options.packets_per_second = a.rate.value_or(manifest_rate(a.in, 1000));
  options.prune = a.prune;
  options.default_permissions = {a.permissions.begin(), a.permissions.end()};
  print_config("enroll", {{"in", a.in},
                          {"store", store_path},
                          {"model", a.model},
                          {"scaler", a.scaler},
                          {"frames_per_capture", a.frames},
                          {"permissions", a.permissions},
                          {"rate", options.packets_per_second},
                          {"prune", a.prune},
                          {"seed", g.seed},
                          {"hyper", hyper_json(a.hyper)}});
  PipelineOptions pipeline;
  pipeline.prune = a.prune;
  pipeline.sanitizer = options.sanitizer;
  auto sessions = load_sessions(g, a.in, pipeline, true, a.frames);
  const FeatureMatrix rows = concatenate(sessions);
  const EnrollmentStore store = enroll(rows, options);
  save_store(store, store_path);
  std::cout << "enrolled " << store.roster.size() << " users from " << rows.rows() << " rows into " << store_path
            << '\n';
  return kExitOk;
}

struct AuthArgs {
  std::string store;
  std::string capture;
  AuthRequest request;
  std::string audit;
};

int run_auth(const Globals&, const AuthArgs& a) {
  const std::string store_path = resolve_store(a.store);
  print_config("auth", {{"store", store_path},
                        {"capture", a.capture},
                        {"window", a.request.window_seconds},
                        {"threshold", a.request.threshold},
                        {"permission", a.request.required_permission},
                        {"audit", a.audit}});
  const EnrollmentStore store = load_store(store_path);
  const CaptureFile capture = read_capture(a.capture);
  std::optional<AuditLog> audit;
  if (!a.audit.empty()) audit.emplace(a.audit);
  const AuthDecision decision = authenticate(store, capture.frames, a.request, audit ? &*audit : nullptr);
  std::cout << decision_to_json(decision) << '\n';
  return kExitOk;
}

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

struct ServeArgs {
  std::string store;
  std::uint16_t port = 7070;
  std::string audit;
};

int run_serve(const Globals&, const ServeArgs& a) {
  const std::string store_path = resolve_store(a.store);
  print_config("serve", {{"store", store_path}, {"port", a.port}, {"audit", a.audit}});
  std::optional<AuditLog> audit;
  if (!a.audit.empty()) audit.emplace(a.audit);
  Service service(audit ? &*audit : nullptr);
  service.set_store(std::make_shared<const EnrollmentStore>(load_store(store_path)));
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  service.serve(a.port, g_stop, [](std::uint16_t port) {
    std::cout << "listening on 127.0.0.1:" << port << std::endl;
  });
  if (audit) audit->flush();
  std::cout << "stopped" << std::endl;
  return kExitOk;
}

struct AuditArgs {
  std::string log;
  std::size_t first = 0;
  std::size_t count = 0;
};

int run_audit(const Globals&, const AuditArgs& a) {
  print_config("audit", {{"log", a.log}, {"first", a.first}, {"count", a.count}});
  const AuditLog log(a.log);
  const auto result = log.read(a.first, a.count);
  for (const auto& d : result.decisions) std::cout << decision_to_json(d) << '\n';
  if (!result.warning.empty()) std::cerr << "warning: " << result.warning << '\n';
  return kExitOk;
}

struct InspectArgs {
  std::string capture;
};

int run_inspect(const Globals&, const InspectArgs& a) {
  print_config("inspect", {{"capture", a.capture}});
  const CaptureFile capture = read_capture(a.capture);
  std::cout << "link_type " << capture.link_type << "\nframes " << capture.frames.size() << "\nskipped_packets "
            << capture.skipped_packets << "\nbad_payloads " << capture.bad_payloads << '\n';
  if (!capture.frames.empty()) {
    const CsiFrame& f = capture.frames.front();
    std::cout << "first_rssi " << static_cast<int>(f.rssi) << "\nfirst_chanspec 0x" << std::hex << f.chanspec
              << "\nfirst_chip 0x" << f.chip_version << std::dec << '\n';
  }
  return kExitOk;
}

std::uint64_t env_seed() {
  const char* env = std::getenv("HANDPASS_SEED");
  if (env == nullptr || *env == '\0') return 42;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string("HANDPASS_SEED is not an unsigned integer: ") + env);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wi-Fi CSI palm authentication toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--seed", seed_flag, "Random seed (fallback: HANDPASS_SEED, then 42)");
  app.add_flag("-v,--verbose", g.verbosity, "Progress messages on stderr");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate synthetic captures and a manifest");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--users", synth.cfg.users)->check(CLI::Range(1, 20));
  c_synth->add_option("--captures", synth.cfg.captures_per_user)->check(CLI::Range(1, 5));
  c_synth->add_option("--frames", synth.cfg.frames_per_capture, "Frames per capture")->check(CLI::PositiveNumber);
  c_synth->add_option("--rate", synth.cfg.packets_per_second, "Packets per second")->check(CLI::PositiveNumber);
  c_synth->add_option("--noise", synth.cfg.noise_sigma, "Noise sigma relative to mean amplitude");
  c_synth->add_option("--interference-rate", synth.cfg.interference_rate);
  c_synth->add_option("--interference-gain", synth.cfg.interference_gain);
  c_synth->add_flag("--both-hands", synth.cfg.both_hands, "Also generate left-hand captures");

  DatasetArgs dataset;
  auto* c_dataset = app.add_subcommand("dataset", "Build a dataset slice CSV from a capture directory");
  c_dataset->add_option("--in", dataset.in, "Capture directory")->required()->check(CLI::ExistingDirectory);
  c_dataset->add_option("--slice", dataset.slice)->check(CLI::IsMember(kSliceNames));
  std::vector<std::string> scaler_or_none = kScalerNames;
  scaler_or_none.push_back("none");
  c_dataset->add_option("--scaler", dataset.scaler, "Scaler fitted on the whole slice")
      ->check(CLI::IsMember(scaler_or_none));
  c_dataset->add_flag("--prune,!--no-prune", dataset.prune, "Drop null and pilot subcarriers (default on)");
  c_dataset->add_flag("--all-hands", dataset.all_hands, "Keep left-hand captures");
  c_dataset->add_option("--rate", dataset.rate, "Packets per second (default: manifest, else 1000)");
  c_dataset->add_option("--out", dataset.out, "Output CSV")->required();

  CrossvalArgs crossval;
  auto* c_crossval = app.add_subcommand("crossval", "Stratified k-fold cross-validation report");
  c_crossval->add_option("--data", crossval.data, "Dataset CSV (repeatable)")->required()->check(CLI::ExistingFile);
  c_crossval->add_option("--model", crossval.models, "Classifier (repeatable)")->check(CLI::IsMember(kModelNames));
  c_crossval->add_option("--k", crossval.k, "Folds")->check(CLI::Range(2, 1000));
  c_crossval->add_option("--fold-scaler", crossval.fold_scaler, "Refit this scaler on every training fold")
      ->check(CLI::IsMember(kScalerNames));
  c_crossval->add_option("--report", crossval.report, "Metrics table CSV");
  c_crossval->add_option("--f1-table", crossval.f1_table, "Per-dataset F1 CSV (one column per model)");
  add_hyper_options(c_crossval, crossval.hyper);

  SelectArgs select;
  auto* c_select = app.add_subcommand("select", "Rank subcarriers by random-forest importance");
  c_select->add_option("--data", select.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  c_select->add_option("--top", select.top, "Subcarriers to keep")->check(CLI::PositiveNumber);
  c_select->add_option("--out", select.out, "Ranking CSV");
  add_hyper_options(c_select, select.hyper);

  EnrollArgs enroll_args;
  auto* c_enroll = app.add_subcommand("enroll", "Train an enrollment store from a capture directory");
  c_enroll->add_option("--in", enroll_args.in, "Capture directory")->required()->check(CLI::ExistingDirectory);
  c_enroll->add_option("--store", enroll_args.store, "Store path (fallback: HANDPASS_STORE)");
  c_enroll->add_option("--model", enroll_args.model)->check(CLI::IsMember(kModelNames));
  c_enroll->add_option("--scaler", enroll_args.scaler)->check(CLI::IsMember(kScalerNames));
  c_enroll->add_option("--frames", enroll_args.frames, "Frames used per capture (0 = all)");
  c_enroll->add_option("--permission", enroll_args.permissions, "Permissions granted to every user");
  c_enroll->add_option("--rate", enroll_args.rate, "Packets per second (default: manifest, else 1000)");
  c_enroll->add_flag("--prune,!--no-prune", enroll_args.prune, "Drop null and pilot subcarriers (default on)");
  add_hyper_options(c_enroll, enroll_args.hyper);

  AuthArgs auth;
  auto* c_auth = app.add_subcommand("auth", "Authenticate one capture file");
  c_auth->add_option("--store", auth.store, "Store path (fallback: HANDPASS_STORE)");
  c_auth->add_option("--capture", auth.capture, "Capture file")->required()->check(CLI::ExistingFile);
  c_auth->add_option("--window", auth.request.window_seconds, "Seconds of frames to classify")
      ->check(CLI::PositiveNumber);
  c_auth->add_option("--threshold", auth.request.threshold, "Required vote share")->check(CLI::Range(0.0, 1.0));
  c_auth->add_option("--permission", auth.request.required_permission, "Permission the user must hold");
  c_auth->add_option("--audit", auth.audit, "Audit log to append to");

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Line-delimited JSON service on 127.0.0.1");
  c_serve->add_option("--store", serve.store, "Store path (fallback: HANDPASS_STORE)");
  c_serve->add_option("--port", serve.port, "TCP port (0 = any free port)");
  c_serve->add_option("--audit", serve.audit, "Audit log to append to");

  AuditArgs audit;
  auto* c_audit = app.add_subcommand("audit", "Print audit log records");
  c_audit->add_option("--log", audit.log, "Audit log")->required();
  c_audit->add_option("--first", audit.first);
  c_audit->add_option("--count", audit.count, "0 = to the end");

  InspectArgs inspect;
  auto* c_inspect = app.add_subcommand("inspect", "Summarize a capture file");
  c_inspect->add_option("--capture", inspect.capture)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    g.seed = seed_flag ? *seed_flag : env_seed();
    if (*c_synth) return run_synth(g, synth);
    if (*c_dataset) return run_dataset(g, dataset);
    if (*c_crossval) return run_crossval(g, crossval);
    if (*c_select) return run_select(g, select);
    if (*c_enroll) return run_enroll(g, enroll_args);
    if (*c_auth) return run_auth(g, auth);
    if (*c_serve) return run_serve(g, serve);
    if (*c_audit) return run_audit(g, audit);
    if (*c_inspect) return run_inspect(g, inspect);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << '\n';
    return kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  return kExitUsage;
}
