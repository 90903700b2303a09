#include "lossdyn/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "lossdyn/error.hpp"

namespace lossdyn {

namespace {

using nlohmann::json;

constexpr double kEntropySlack = 1e-12;

std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

}  // namespace

std::int64_t AnnotationRecord::total() const noexcept {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

int majority_label(std::span<const std::int64_t> counts) {
  if (counts.empty()) throw Error(Errc::invalid_record, "empty count vector");
  // max_element returns the first maximum, i.e. the lowest class index on ties.
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

AnnotationRecord make_record(std::string uid, std::vector<std::int64_t> counts,
                             std::optional<std::string> text) {
  if (counts.size() < 2) throw Error(Errc::invalid_record, "record '" + uid + "' needs at least 2 classes");
  std::int64_t sum = 0;
  for (auto c : counts) {
    if (c < 0) throw Error(Errc::invalid_record, "record '" + uid + "' has a negative count");
    sum += c;
  }
  if (sum < 1) throw Error(Errc::invalid_record, "record '" + uid + "' has all-zero counts");
  AnnotationRecord r;
  r.uid = std::move(uid);
  r.counts = std::move(counts);
  r.gold = majority_label(r.counts);
  r.text = std::move(text);
  return r;
}

double entropy(std::span<const std::int64_t> counts) {
  std::int64_t total = 0;
  for (auto c : counts) {
    if (c < 0) throw Error(Errc::invalid_record, "negative annotator count");
    total += c;
  }
  if (total < 1) throw Error(Errc::invalid_record, "all-zero annotator counts");
  const double k = static_cast<double>(total);
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / k;
    h -= p * std::log(p);
  }
  // Exact zero for unanimous records regardless of rounding in p log p.
  return h < 0.0 ? 0.0 : h;
}

double entropy(const AnnotationRecord& record) { return entropy(record.counts); }

std::string_view to_string(EntropyCategory c) noexcept {
  switch (c) {
    case EntropyCategory::Clean: return "clean";
    case EntropyCategory::Ambiguous: return "ambiguous";
    case EntropyCategory::Contested: return "contested";
  }
  return "unknown";
}

EntropyCategory parse_category(std::string_view name) {
  if (name == "clean") return EntropyCategory::Clean;
  if (name == "ambiguous") return EntropyCategory::Ambiguous;
  if (name == "contested") return EntropyCategory::Contested;
  throw Error(Errc::parse, "unknown entropy category '" + std::string(name) + "'");
}

void validate(const FixedThresholds& scheme, int num_classes) {
  const double max_h = std::log(static_cast<double>(num_classes));
  if (!(scheme.lower > 0.0 && scheme.lower < scheme.upper && scheme.upper < max_h)) {
    std::ostringstream os;
    os << "fixed thresholds must satisfy 0 < lower < upper < ln C; got (" << scheme.lower << ", "
       << scheme.upper << ")";
    throw Error(Errc::domain, os.str());
  }
}

namespace {

double checked_entropy_value(double h, int num_classes) {
  if (!(h >= 0.0)) throw Error(Errc::domain, "entropy must be non-negative");
  const double max_h = std::log(static_cast<double>(num_classes));
  if (h > max_h + kEntropySlack) throw Error(Errc::domain, "entropy exceeds ln C");
  return std::min(h, max_h);
}

}  // namespace

EntropyCategory categorize(double h, const FixedThresholds& scheme, int num_classes) {
  validate(scheme, num_classes);
  h = checked_entropy_value(h, num_classes);
  if (h < scheme.lower) return EntropyCategory::Clean;
  if (h < scheme.upper) return EntropyCategory::Ambiguous;
  return EntropyCategory::Contested;
}

std::size_t bin_index(double h, const BinningScheme& scheme, int num_classes) {
  if (const auto* fixed = std::get_if<FixedThresholds>(&scheme)) {
    return static_cast<std::size_t>(categorize(h, *fixed, num_classes));
  }
  const auto& bins = std::get<PercentileBins>(scheme);
  h = checked_entropy_value(h, num_classes);
  // Number of cut points <= h: half-open bins, the last one closed above.
  return static_cast<std::size_t>(std::upper_bound(bins.cuts.begin(), bins.cuts.end(), h) -
                                  bins.cuts.begin());
}

std::size_t bin_count(const BinningScheme& scheme) noexcept {
  if (std::holds_alternative<FixedThresholds>(scheme)) return kNumCategories;
  return std::get<PercentileBins>(scheme).bins();
}

std::string describe(const BinningScheme& scheme) {
  std::ostringstream os;
  if (const auto* fixed = std::get_if<FixedThresholds>(&scheme)) {
    os << "fixed:" << fixed->lower << "," << fixed->upper;
  } else {
    const auto& bins = std::get<PercentileBins>(scheme);
    os << "percentile:" << bins.bins();
  }
  return os.str();
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(Errc::empty_input, "quantile of empty data");
  if (q <= 0.0) return sorted.front();
  if (q >= 1.0) return sorted.back();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

PercentileBins percentile_bins(std::span<const double> values, std::size_t k) {
  if (k < 2) throw Error(Errc::domain, "percentile binning needs k >= 2");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> uniq = sorted;
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() < k) {
    throw Error(Errc::degenerate_bins, "need at least " + std::to_string(k) + " distinct values, got " +
                                           std::to_string(uniq.size()));
  }
  PercentileBins bins;
  for (std::size_t j = 1; j < k; ++j) {
    bins.cuts.push_back(quantile_sorted(sorted, static_cast<double>(j) / static_cast<double>(k)));
  }
  std::vector<std::size_t> sizes(k, 0);
  for (double v : sorted) {
    ++sizes[static_cast<std::size_t>(std::upper_bound(bins.cuts.begin(), bins.cuts.end(), v) -
                                      bins.cuts.begin())];
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (sizes[j] == 0) {
      throw Error(Errc::degenerate_bins, "percentile bin " + std::to_string(j) + " is empty (heavy ties)");
    }
  }
  return bins;
}

AnnotationSet parse_annotations(std::istream& in) {
  AnnotationSet out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  int num_classes = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::parse, line_prefix(line_no) + "malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw Error(Errc::parse, line_prefix(line_no) + "record is not an object");
    if (!obj.contains("uid") || !obj["uid"].is_string()) {
      throw Error(Errc::parse, line_prefix(line_no) + "missing string field 'uid'");
    }
    const json* counts_field = nullptr;
    if (obj.contains("counts")) {
      counts_field = &obj["counts"];
    } else if (obj.contains("label_count")) {
      counts_field = &obj["label_count"];
    }
    if (counts_field == nullptr || !counts_field->is_array()) {
      throw Error(Errc::parse, line_prefix(line_no) + "missing integer array 'counts'");
    }
    std::vector<std::int64_t> counts;
    for (const auto& c : *counts_field) {
      if (!c.is_number_integer()) throw Error(Errc::parse, line_prefix(line_no) + "counts must be integers");
      counts.push_back(c.get<std::int64_t>());
    }
    if (num_classes == 0) {
      num_classes = static_cast<int>(counts.size());
    } else if (static_cast<int>(counts.size()) != num_classes) {
      throw Error(Errc::parse, line_prefix(line_no) + "expected " + std::to_string(num_classes) +
                                   " classes, got " + std::to_string(counts.size()));
    }
    std::optional<std::string> text;
    for (const char* key : {"text", "example"}) {
      if (obj.contains(key) && !obj[key].is_null()) {
        text = obj[key].is_string() ? obj[key].get<std::string>() : obj[key].dump();
        break;
      }
    }
    std::string uid = obj["uid"].get<std::string>();
    AnnotationRecord record;
    try {
      record = make_record(uid, std::move(counts), std::move(text));
    } catch (const Error& e) {
      throw Error(Errc::parse, line_prefix(line_no) + e.what());
    }
    if (!seen.insert(record.uid).second) {
      throw Error(Errc::duplicate, line_prefix(line_no) + "duplicate uid '" + record.uid + "'");
    }
    if (obj.contains("gold") && !obj["gold"].is_null()) {
      if (!obj["gold"].is_number_integer()) throw Error(Errc::parse, line_prefix(line_no) + "gold must be an integer");
      const int stored = obj["gold"].get<int>();
      if (stored != record.gold) {
        out.warnings.push_back(line_prefix(line_no) + "uid '" + record.uid + "' stored gold " +
                               std::to_string(stored) + " differs from majority label " +
                               std::to_string(record.gold));
      }
    }
    out.records.push_back(std::move(record));
  }
  return out;
}

AnnotationSet load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open annotation file '" + path.string() + "'");
  return parse_annotations(in);
}

void write_annotations(std::ostream& out, std::span<const AnnotationRecord> records) {
  for (const auto& r : records) {
    json obj;
    obj["uid"] = r.uid;
    obj["counts"] = r.counts;
    obj["gold"] = r.gold;
    if (r.text) obj["text"] = *r.text;
    out << obj.dump() << '\n';
  }
}

DistributionSummary distribution_summary(std::span<const AnnotationRecord> records,
                                         const BinningScheme& scheme) {
  if (records.empty()) throw Error(Errc::empty_input, "distribution summary of an empty record list");
  DistributionSummary s;
  s.n = records.size();
  s.counts.assign(bin_count(scheme), 0);
  for (const auto& r : records) ++s.counts[bin_index(entropy(r), scheme, r.num_classes())];
  for (auto c : s.counts) s.fractions.push_back(static_cast<double>(c) / static_cast<double>(s.n));
  return s;
}

}  // namespace lossdyn
