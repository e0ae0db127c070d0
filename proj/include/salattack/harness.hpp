#pragma once

// Batch experiment runner: dataset + backend + attack config in, per-image
// record CSVs and aggregate/curve/sweep/paired CSVs out.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "salattack/attack.hpp"
#include "salattack/greedy.hpp"
#include "salattack/metrics.hpp"
#include "salattack/network.hpp"
#include "salattack/raster_io.hpp"
#include "salattack/remote.hpp"
#include "salattack/saliency.hpp"
#include "salattack/square.hpp"

namespace salattack {

inline constexpr int kRecordSchema = 1;

inline const std::vector<std::string>& attack_names() {
  static const std::vector<std::string> names{"saliency", "square", "square-sal", "greedy"};
  return names;
}

// ---------------------------------------------------------------- spec

struct ExperimentSpec {
  std::filesystem::path dataset;
  std::filesystem::path labels;
  std::filesystem::path weights;  // embedded backend, or
  std::string endpoint;           // remote backend
  std::string saliency = "builtin";  // maps directory or "builtin" (spectral residual)
  std::vector<std::string> attacks{"saliency"};
  std::vector<std::size_t> budgets{3000};
  AttackConfig config;
  std::filesystem::path output = "out";
  std::vector<double> mad_thresholds{20.0, 30.0, 40.0};
  int resize = 256;    // input side declared for an endpoint backend
  int channels = 3;    // input channels declared for an endpoint backend
  int classes = 10;    // classes declared for an endpoint backend
  int workers = 0;     // 0 = hardware concurrency
};

inline void validate(const ExperimentSpec& s) {
  namespace fs = std::filesystem;
  auto need = [](const fs::path& p, const std::string& what) {
    if (p.empty() || !fs::exists(p)) throw InvalidInput(what + " not found: '" + p.string() + "'");
  };
  need(s.dataset, "dataset directory");
  need(s.labels, "labels file");
  if (s.weights.empty() == s.endpoint.empty()) throw InvalidInput("give exactly one of weights or endpoint");
  if (!s.weights.empty()) need(s.weights, "weights file");
  if (!s.endpoint.empty()) parse_endpoint(s.endpoint);
  if (s.saliency != "builtin") need(s.saliency, "saliency directory");
  if (s.attacks.empty()) throw InvalidInput("no attack given");
  for (const auto& a : s.attacks)
    if (std::find(attack_names().begin(), attack_names().end(), a) == attack_names().end())
      throw InvalidInput("unknown attack '" + a + "'");
  if (s.budgets.empty()) throw InvalidInput("no budget given");
  for (auto b : s.budgets)
    if (b < 1) throw InvalidInput("budget must be >= 1");
  AttackConfig c = s.config;
  check_common(c);
  if (!is_power_of_two(c.k_int) || c.k_int < 2) throw InvalidInput("k_int must be a power of two >= 2");
  if (!(c.phi >= 0.0f && c.phi <= 1.0f)) throw InvalidInput("phi must lie in [0, 1]");
  if (s.resize < 2 || s.channels < 1 || s.classes < 2) throw InvalidInput("bad endpoint input declaration");
  if (s.workers < 0) throw InvalidInput("workers must be >= 0");
}

/// Reads a JSON config; keys mirror the CLI flags. Unknown keys are errors.
inline ExperimentSpec spec_from_json(const nlohmann::json& j, ExperimentSpec s = {}) {
  static const std::vector<std::string> known{"dataset", "labels",    "weights", "endpoint", "saliency", "attack",
                                              "budget",  "epsilon",   "k_int",   "phi",      "mode",     "seed",
                                              "output",  "mad_thresholds", "resize", "channels", "classes", "workers"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw InvalidInput("unknown config key '" + key + "'");
  try {
    if (j.contains("dataset")) s.dataset = j["dataset"].get<std::string>();
    if (j.contains("labels")) s.labels = j["labels"].get<std::string>();
    if (j.contains("weights")) s.weights = j["weights"].get<std::string>();
    if (j.contains("endpoint")) s.endpoint = j["endpoint"].get<std::string>();
    if (j.contains("saliency")) s.saliency = j["saliency"].get<std::string>();
    if (j.contains("attack")) {
      s.attacks = j["attack"].is_array() ? j["attack"].get<std::vector<std::string>>()
                                         : std::vector<std::string>{j["attack"].get<std::string>()};
    }
    if (j.contains("budget")) {
      s.budgets = j["budget"].is_array() ? j["budget"].get<std::vector<std::size_t>>()
                                         : std::vector<std::size_t>{j["budget"].get<std::size_t>()};
    }
    if (j.contains("epsilon")) s.config.epsilon = j["epsilon"].get<float>();
    if (j.contains("k_int")) s.config.k_int = j["k_int"].get<int>();
    if (j.contains("phi")) s.config.phi = j["phi"].get<float>();
    if (j.contains("mode")) s.config.mode = parse_mode(j["mode"].get<std::string>());
    if (j.contains("seed")) s.config.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("output")) s.output = j["output"].get<std::string>();
    if (j.contains("mad_thresholds")) s.mad_thresholds = j["mad_thresholds"].get<std::vector<double>>();
    if (j.contains("resize")) s.resize = j["resize"].get<int>();
    if (j.contains("channels")) s.channels = j["channels"].get<int>();
    if (j.contains("classes")) s.classes = j["classes"].get<int>();
    if (j.contains("workers")) s.workers = j["workers"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  // Relative paths in a config file are relative to the working directory.
  return s;
}

inline ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config '" + path.string() + "'");
  try {
    return spec_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput("config '" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------- hashing / formatting

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Shortest round-trip decimal; "inf", "-inf", "nan" for non-finite values.
inline std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw FormatError("not a number: '" + s + "'");
  return v;
}

template <typename Int>
Int parse_int(const std::string& s) {
  Int v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw FormatError("not an integer: '" + s + "'");
  return v;
}

/// Canonical identity of one (attack, config) cell; the hash of this string is
/// the config hash written with every record.
inline std::string canonical_config(const ExperimentSpec& s, const std::string& attack, std::size_t budget) {
  const std::string backend = s.weights.empty() ? "endpoint:" + s.endpoint : "weights:" + s.weights.filename().string();
  const std::string sal = s.saliency == "builtin" ? "builtin" : "maps";
  return "attack=" + attack + ";mode=" + to_string(s.config.mode) + ";epsilon=" + fmt(s.config.epsilon) +
         ";k_int=" + std::to_string(s.config.k_int) + ";budget=" + std::to_string(budget) + ";phi=" + fmt(s.config.phi) +
         ";seed=" + std::to_string(s.config.seed) + ";saliency=" + sal + ";backend=" + backend;
}

inline std::string config_hash(const ExperimentSpec& s, const std::string& attack, std::size_t budget) {
  return hex64(fnv1a64(canonical_config(s, attack, budget)));
}

// ---------------------------------------------------------------- CSV

inline std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n\r") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c == '\n' || c == '\r' ? ' ' : c;
  }
  return out + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

struct LabeledImage {
  std::string id;  // file name relative to the dataset directory
  int label = 0;
};

/// `filename,class_index` rows; a first row whose second field is not an
/// integer is taken as a header.
inline std::vector<LabeledImage> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open labels file '" + path.string() + "'");
  std::vector<LabeledImage> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2) throw InvalidInput(path.string() + ":" + std::to_string(n) + ": expected filename,class_index");
    try {
      out.push_back({f[0], parse_int<int>(f[1])});
    } catch (const FormatError&) {
      if (n != 1) throw InvalidInput(path.string() + ":" + std::to_string(n) + ": bad class index '" + f[1] + "'");
    }
  }
  if (out.empty()) throw InvalidInput("labels file '" + path.string() + "' lists no images");
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].id == out[i - 1].id) throw InvalidInput("duplicate image id '" + out[i].id + "'");
  return out;
}

// ---------------------------------------------------------------- records

struct RunRecord {
  std::string image_id;
  int label = 0;
  std::string attack;
  std::string mode;
  std::size_t budget = 0;
  int k_int = 0;
  double epsilon = 0;
  double phi = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // "ok" or "error"
  bool success = false;
  bool prior_misclassified = false;
  std::size_t queries = 0;
  std::size_t first_success_query = 0;  // 0 when the attack never succeeded
  double best_F = -std::numeric_limits<double>::infinity();
  double l0_fraction = 0, l2 = 0, linf = 0, mad = 0;
  std::string config_hash;
  std::string message;

  bool ok() const { return status == "ok"; }
  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline const std::string& record_header() {
  static const std::string h =
      "schema,image_id,label,attack,mode,budget,k_int,epsilon,phi,seed,status,success,prior_misclassified,queries,"
      "first_success_query,best_f,l0_fraction,l2,linf,mad,config_hash,message";
  return h;
}

inline std::string to_csv_row(const RunRecord& r) {
  std::ostringstream os;
  os << kRecordSchema << ',' << csv_field(r.image_id) << ',' << r.label << ',' << r.attack << ',' << r.mode << ','
     << r.budget << ',' << r.k_int << ',' << fmt(r.epsilon) << ',' << fmt(r.phi) << ',' << r.seed << ',' << r.status
     << ',' << int(r.success) << ',' << int(r.prior_misclassified) << ',' << r.queries << ',' << r.first_success_query
     << ',' << fmt(r.best_F) << ',' << fmt(r.l0_fraction) << ',' << fmt(r.l2) << ',' << fmt(r.linf) << ','
     << fmt(r.mad) << ',' << r.config_hash << ',' << csv_field(r.message);
  return os.str();
}

inline RunRecord from_csv_row(const std::string& line) {
  const auto f = split_csv_line(line);
  if (f.size() != 22) throw FormatError("record row has " + std::to_string(f.size()) + " fields, expected 22");
  if (parse_int<int>(f[0]) != kRecordSchema) throw FormatError("unsupported record schema " + f[0]);
  auto flag = [](const std::string& s) {
    if (s != "0" && s != "1") throw FormatError("bad flag '" + s + "'");
    return s == "1";
  };
  RunRecord r;
  r.image_id = f[1];
  r.label = parse_int<int>(f[2]);
  r.attack = f[3];
  r.mode = f[4];
  r.budget = parse_int<std::size_t>(f[5]);
  r.k_int = parse_int<int>(f[6]);
  r.epsilon = parse_double(f[7]);
  r.phi = parse_double(f[8]);
  r.seed = parse_int<std::uint64_t>(f[9]);
  r.status = f[10];
  r.success = flag(f[11]);
  r.prior_misclassified = flag(f[12]);
  r.queries = parse_int<std::size_t>(f[13]);
  r.first_success_query = parse_int<std::size_t>(f[14]);
  r.best_F = parse_double(f[15]);
  r.l0_fraction = parse_double(f[16]);
  r.l2 = parse_double(f[17]);
  r.linf = parse_double(f[18]);
  r.mad = parse_double(f[19]);
  r.config_hash = f[20];
  r.message = f[21];
  return r;
}

inline void write_records(const std::vector<RunRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
  out << record_header() << '\n';
  for (const auto& r : records) out << to_csv_row(r) << '\n';
}

inline std::vector<RunRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open records '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != record_header())
    throw FormatError("'" + path.string() + "' does not start with the record header");
  std::vector<RunRecord> out;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(from_csv_row(line));
  return out;
}

// ---------------------------------------------------------------- aggregation

struct AggregateRow {
  std::string attack, mode;
  std::size_t budget = 0;
  int k_int = 0;
  std::string config_hash;
  std::size_t errors = 0;
  std::size_t prior_misclassified = 0;
  AggregateStats stats;
  double mean_queries = 0;  // over successful records
};

/// Pure fold of records into one row per config hash (in first-seen order).
/// Error records are counted but excluded from every rate and mean.
inline std::vector<AggregateRow> fold_aggregates(const std::vector<RunRecord>& records,
                                                 double mad_threshold = kMadThreshold) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    auto [it, fresh] = groups.try_emplace(r.config_hash);
    if (fresh) order.push_back(r.config_hash);
    it->second.push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (const auto& h : order) {
    const auto& g = groups[h];
    AggregateRow row;
    row.attack = g.front()->attack;
    row.mode = g.front()->mode;
    row.budget = g.front()->budget;
    row.k_int = g.front()->k_int;
    row.config_hash = h;
    std::vector<AttackResult> batch;
    std::vector<double> q;
    for (const RunRecord* r : g) {
      if (!r->ok()) {
        ++row.errors;
        continue;
      }
      row.prior_misclassified += r->prior_misclassified;
      batch.push_back({r->success, {r->l0_fraction, r->l2, r->linf, r->mad}});
      if (r->success) q.push_back(static_cast<double>(r->queries));
    }
    if (!batch.empty()) row.stats = aggregate(batch, mad_threshold);
    std::sort(q.begin(), q.end());
    row.mean_queries = mean_sd(q).mean;
    out.push_back(std::move(row));
  }
  return out;
}

inline void write_aggregates(const std::vector<AggregateRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
  out << "attack,mode,budget,k_int,config_hash,n,errors,prior_misclassified,successes,sr,sr_true,l0_mean,l0_sd,"
         "l2_mean,l2_sd,mad_mean,mad_sd,mean_queries\n";
  for (const auto& r : rows) {
    const auto& s = r.stats;
    out << r.attack << ',' << r.mode << ',' << r.budget << ',' << r.k_int << ',' << r.config_hash << ',' << s.n << ','
        << r.errors << ',' << r.prior_misclassified << ',' << s.successes << ',' << fmt(s.sr) << ',' << fmt(s.sr_true)
        << ',' << fmt(s.l0.mean) << ',' << fmt(s.l0.sd) << ',' << fmt(s.l2.mean) << ',' << fmt(s.l2.sd) << ','
        << fmt(s.mad.mean) << ',' << fmt(s.mad.sd) << ',' << fmt(r.mean_queries) << '\n';
  }
}

/// Records of one (attack, config) cell. `attack` may be empty when the file
/// holds a single cell; more than one remaining cell is an error.
inline std::vector<RunRecord> select_cell(const std::vector<RunRecord>& records, const std::string& attack = "") {
  std::vector<RunRecord> out;
  for (const auto& r : records)
    if (attack.empty() || r.attack == attack) out.push_back(r);
  if (out.empty()) throw InvalidInput("no records" + (attack.empty() ? std::string() : " for attack '" + attack + "'"));
  for (const auto& r : out)
    if (r.config_hash != out.front().config_hash)
      throw InvalidInput("records hold several configurations; select one attack (and a single budget)");
  return out;
}

// ---------------------------------------------------------------- convergence

struct CurvePoint {
  std::size_t queries = 0;
  double threshold = 0;
  double sr_true = 0;
};

/// Cumulative SR_true against the query grid 0, step, 2 step, ..., max_query:
/// the fraction of non-error records whose first success came within the grid
/// value and whose MAD is <= threshold.
inline std::vector<CurvePoint> convergence(const std::vector<RunRecord>& records, const std::vector<double>& thresholds,
                                           std::size_t step, std::size_t max_query) {
  if (step < 1) throw InvalidInput("convergence: step must be >= 1");
  if (thresholds.empty()) throw InvalidInput("convergence: no thresholds");
  std::vector<const RunRecord*> ok;
  for (const auto& r : records)
    if (r.ok()) ok.push_back(&r);
  std::vector<CurvePoint> out;
  for (double t : thresholds) {
    for (std::size_t q = 0;; q += step) {
      q = std::min(q, max_query);
      std::size_t hit = 0;
      for (const RunRecord* r : ok)
        if (r->success && r->first_success_query <= q && r->mad <= t) ++hit;
      out.push_back({q, t, ok.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(ok.size())});
      if (q == max_query) break;
    }
  }
  return out;
}

inline void write_curve(const std::vector<CurvePoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
  out << "queries,threshold,sr_true\n";
  for (const auto& p : curve) out << p.queries << ',' << fmt(p.threshold) << ',' << fmt(p.sr_true) << '\n';
}

// ---------------------------------------------------------------- paired comparison

struct PairedRow {
  std::string image_id;
  double mad_a = 0, mad_b = 0;
};

struct PairedComparison {
  std::vector<PairedRow> rows;
  double fraction_b_better = 0;  // strict mad_b < mad_a, over pairs where both records are "ok"
};

inline PairedComparison compare_paired(const std::vector<RunRecord>& a, const std::vector<RunRecord>& b) {
  std::map<std::string, const RunRecord*> ia, ib;
  for (const auto& r : a)
    if (!ia.emplace(r.image_id, &r).second) throw InvalidInput("compare: duplicate id '" + r.image_id + "' in A");
  for (const auto& r : b)
    if (!ib.emplace(r.image_id, &r).second) throw InvalidInput("compare: duplicate id '" + r.image_id + "' in B");
  if (ia.size() != ib.size()) throw InvalidInput("compare: image id sets differ");
  PairedComparison out;
  std::size_t both = 0, better = 0;
  for (const auto& [id, ra] : ia) {
    const auto it = ib.find(id);
    if (it == ib.end()) throw InvalidInput("compare: id '" + id + "' missing from B");
    out.rows.push_back({id, ra->mad, it->second->mad});
    if (ra->ok() && it->second->ok()) {
      ++both;
      better += it->second->mad < ra->mad;
    }
  }
  out.fraction_b_better = both ? static_cast<double>(better) / static_cast<double>(both) : 0.0;
  return out;
}

inline void write_paired(const PairedComparison& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
  out << "image_id,mad_a,mad_b\n";
  for (const auto& r : c.rows) out << csv_field(r.image_id) << ',' << fmt(r.mad_a) << ',' << fmt(r.mad_b) << '\n';
  out << "# fraction_b_better," << fmt(c.fraction_b_better) << '\n';
}

// ---------------------------------------------------------------- running

inline std::unique_ptr<ClassifierBackend> make_backend(const ExperimentSpec& s) {
  if (!s.weights.empty()) return std::make_unique<EmbeddedBackend>(EmbeddedBackend::from_file(s.weights));
  return std::make_unique<RemoteBackend>(s.endpoint, InputSpec{s.resize, s.resize, s.channels}, s.classes);
}

/// Per-image seed: the run seed mixed with the image id, so a record does not
/// depend on which worker attacked it or on the other images in the set.
inline std::uint64_t image_seed(std::uint64_t seed, const std::string& id) {
  std::uint64_t z = seed ^ fnv1a64(id);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Image resized to the backend input geometry, and its binarized mask.
struct PreparedImage {
  Image x;
  SalientMask mask;
};

inline PreparedImage prepare_image(const ExperimentSpec& s, const LabeledImage& item, const InputSpec& in) {
  Image x = load_image(s.dataset / item.id);
  if (x.channels() != in.channels)
    throw InvalidInput(item.id + ": image has " + std::to_string(x.channels()) + " channels, backend expects " +
                       std::to_string(in.channels));
  if (x.height() != in.height || x.width() != in.width) x = resize_bilinear(x, in.height, in.width);
  const SaliencyMap map = s.saliency == "builtin"
                              ? spectral_residual(x)
                              : load_saliency(std::filesystem::path(s.saliency) / item.id, in.height, in.width);
  return {std::move(x), binarize(map, s.config.phi)};
}

inline AttackOutcome run_attack(const std::string& attack, const Image& x, int y, const SalientMask& mask,
                                const ClassifierBackend& backend, const AttackConfig& c) {
  if (attack == "saliency") return saliency_attack(x, y, mask, backend, c);
  if (attack == "square") return square_attack(x, y, backend, c);
  if (attack == "square-sal") return square_attack(x, y, backend, c, effective_mask(mask, c.mode));
  if (attack == "greedy") return greedy_block_search(x, y, mask, backend, c.k_int, c);
  throw InvalidInput("unknown attack '" + attack + "'");
}

inline RunRecord attack_one(const ExperimentSpec& s, const std::string& attack, std::size_t budget,
                            const std::string& hash, const LabeledImage& item, const ClassifierBackend& backend) {
  RunRecord r;
  r.image_id = item.id;
  r.label = item.label;
  r.attack = attack;
  r.mode = to_string(s.config.mode);
  r.budget = budget;
  r.k_int = s.config.k_int;
  r.epsilon = s.config.epsilon;
  r.phi = s.config.phi;
  r.seed = s.config.seed;
  r.config_hash = hash;
  try {
    const PreparedImage p = prepare_image(s, item, backend.input_spec());
    AttackConfig c = s.config;
    c.budget = budget;
    c.seed = image_seed(s.config.seed, item.id);
    const AttackOutcome o = run_attack(attack, p.x, item.label, p.mask, backend, c);
    r.success = o.success;
    r.prior_misclassified = o.prior_misclassified;
    r.queries = o.queries;
    for (const auto& t : o.trace)
      if (t.success) {
        r.first_success_query = t.query;
        break;
      }
    r.best_F = o.best_F;
    const auto m = measure(p.x, o.adversarial);
    r.l0_fraction = m.l0_fraction;
    r.l2 = m.l2;
    r.linf = m.linf;
    r.mad = m.mad;
  } catch (const std::exception& e) {
    r.status = "error";
    r.message = e.what();
  }
  return r;
}

/// Runs every (attack, budget) cell over the dataset with a bounded worker pool.
/// Records come back grouped by cell and ordered by image id within each cell.
inline std::vector<RunRecord> run_records(const ExperimentSpec& s, const ClassifierBackend& backend) {
  validate(s);
  const auto items = read_labels(s.labels);
  struct Job {
    std::string attack;
    std::size_t budget;
    std::string hash;
    const LabeledImage* item;
  };
  std::vector<Job> jobs;
  for (const auto& a : s.attacks)
    for (auto b : s.budgets)
      for (const auto& it : items) jobs.push_back({a, b, config_hash(s, a, b), &it});

  std::vector<RunRecord> out(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next++) < jobs.size();)
      out[i] = attack_one(s, jobs[i].attack, jobs[i].budget, jobs[i].hash, *jobs[i].item, backend);
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t n = std::min<std::size_t>(s.workers > 0 ? static_cast<std::size_t>(s.workers) : hw, jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return out;
}

struct SuiteFiles {
  std::filesystem::path records, aggregate;
};

inline SuiteFiles run_suite(const ExperimentSpec& s, const ClassifierBackend& backend) {
  const auto records = run_records(s, backend);
  std::filesystem::create_directories(s.output);
  SuiteFiles f{s.output / "records.csv", s.output / "aggregate.csv"};
  write_records(records, f.records);
  write_aggregates(fold_aggregates(records), f.aggregate);
  return f;
}

inline SuiteFiles run_suite(const ExperimentSpec& s) { return run_suite(s, *make_backend(s)); }

struct SweepRow {
  int k_int = 0;
  std::size_t n = 0, errors = 0;
  double sr = 0, mean_queries = 0, mean_l2 = 0, mean_mad = 0;
};

/// One saliency-attack suite per k_int (first budget only); every record goes to
/// records.csv and one row per k to sweep.csv.
inline std::vector<SweepRow> sweep_kint(const ExperimentSpec& base, const std::vector<int>& ks,
                                        const ClassifierBackend& backend) {
  if (ks.empty()) throw InvalidInput("sweep: no k values");
  const InputSpec in = backend.input_spec();
  for (int k : ks)
    if (!is_power_of_two(k) || k < 2 || k > std::min(in.height, in.width))
      throw InvalidInput("sweep: k_int " + std::to_string(k) + " is not a power of two in [2, image side]");
  std::vector<RunRecord> all;
  std::vector<SweepRow> rows;
  for (int k : ks) {
    ExperimentSpec s = base;
    s.attacks = {"saliency"};
    s.budgets = {base.budgets.front()};
    s.config.k_int = k;
    const auto records = run_records(s, backend);
    const auto agg = fold_aggregates(records).front();
    rows.push_back({k, agg.stats.n, agg.errors, agg.stats.sr, agg.mean_queries, agg.stats.l2.mean, agg.stats.mad.mean});
    all.insert(all.end(), records.begin(), records.end());
  }
  std::filesystem::create_directories(base.output);
  write_records(all, base.output / "records.csv");
  std::ofstream out(base.output / "sweep.csv", std::ios::binary);
  out << "k_int,n,errors,sr,mean_queries,mean_l2,mean_mad\n";
  for (const auto& r : rows)
    out << r.k_int << ',' << r.n << ',' << r.errors << ',' << fmt(r.sr) << ',' << fmt(r.mean_queries) << ','
        << fmt(r.mean_l2) << ',' << fmt(r.mean_mad) << '\n';
  return rows;
}

}  // namespace salattack
