#include "ctrfusion/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "ctrfusion/errors.hpp"
#include "json.hpp"

namespace ctrfusion {

using nlohmann::json;

std::size_t FeatureSchema::sparse_count() const {
  return static_cast<std::size_t>(std::count_if(features.begin(), features.end(),
                                                [](const auto& f) { return f.kind == FeatureKind::kSparse; }));
}

std::size_t FeatureSchema::dense_count() const { return features.size() - sparse_count(); }

std::vector<const FeatureDescriptor*> FeatureSchema::sparse() const {
  std::vector<const FeatureDescriptor*> out;
  for (const auto& f : features) {
    if (f.kind == FeatureKind::kSparse) out.push_back(&f);
  }
  return out;
}

std::vector<const FeatureDescriptor*> FeatureSchema::dense() const {
  std::vector<const FeatureDescriptor*> out;
  for (const auto& f : features) {
    if (f.kind == FeatureKind::kDense) out.push_back(&f);
  }
  return out;
}

double normalize_dense(double value, double min, double max) {
  if (!(max > min)) return 0.0;
  return std::clamp((value - min) / (max - min), 0.0, 1.0);
}

int bucketize(double normalized) {
  const double v = std::clamp(normalized, 0.0, 1.0);
  return std::min(static_cast<int>(std::floor(v * 100.0)), 100);
}

std::vector<int> robust_id_dropout(std::vector<int> ids, double rate, std::mt19937_64& rng, bool training) {
  if (!training || rate <= 0.0) return ids;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int& id : ids) {
    if (unit(rng) < rate) id = kMissingId;
  }
  return ids;
}

FeatureSpace FeatureSpace::fit(const RawLog& train, FeatureFamilies families) {
  if (train.records.empty()) throw Error("generate_features: empty training log");
  FeatureSpace fs;
  fs.schema_.layout = train.layout;
  fs.schema_.families = families;
  const std::size_t ns = train.layout.sparse_columns.size();
  fs.ids_.resize(ns);
  fs.stats_.resize(ns);

  double clicks = 0.0;
  std::vector<Document> corpus;
  corpus.reserve(train.records.size());
  for (const RawRecord& r : train.records) {
    for (std::size_t c = 0; c < ns; ++c) {
      auto& ids = fs.ids_[c];
      if (!ids.contains(r.sparse[c])) ids.emplace(r.sparse[c], static_cast<int>(ids.size()) + 1);
      auto& s = fs.stats_[c][r.sparse[c]];
      s.impressions += 1.0;
      s.clicks += r.click;
    }
    clicks += r.click;
    Document doc = r.query;
    const auto ad = r.ad_tokens();
    doc.insert(doc.end(), ad.begin(), ad.end());
    corpus.push_back(std::move(doc));
  }
  fs.global_ctr_ = clicks / static_cast<double>(train.records.size());
  if (families.semantic) {
    for (const TokenScore& t : tfidf_ranking(corpus)) fs.tfidf_.emplace(t.token, t.score);
  }

  auto& features = fs.schema_.features;
  if (families.ids) {
    for (std::size_t c = 0; c < ns; ++c) {
      FeatureDescriptor f;
      f.name = "id_" + train.layout.sparse_columns[c];
      f.kind = FeatureKind::kSparse;
      f.cardinality = fs.ids_[c].size() + 1;
      features.push_back(f);
    }
  }
  auto dense = [&](std::string name) {
    FeatureDescriptor f;
    f.name = std::move(name);
    f.kind = FeatureKind::kDense;
    features.push_back(f);
  };
  if (families.historical) {
    for (const auto& col : train.layout.sparse_columns) {
      dense("hist_ctr_" + col);
      dense("hist_imps_" + col);
    }
  }
  if (families.length) {
    dense("len_query");
    dense("len_title");
    dense("len_url");
  }
  if (families.semantic) {
    dense("tfidf_query");
    dense("tfidf_title");
  }
  if (families.numeric) {
    for (const auto& col : train.layout.numeric_columns) dense("num_" + col);
  }
  if (features.empty()) throw ConfigError("generate_features: no feature family enabled");

  // Dense ranges over the training set.
  std::vector<double> lo(fs.schema_.dense_count(), std::numeric_limits<double>::infinity());
  std::vector<double> hi(fs.schema_.dense_count(), -std::numeric_limits<double>::infinity());
  for (const RawRecord& r : train.records) {
    const RawFeatures raw = fs.raw_features(r);
    for (std::size_t i = 0; i < raw.dense.size(); ++i) {
      lo[i] = std::min(lo[i], raw.dense[i]);
      hi[i] = std::max(hi[i], raw.dense[i]);
    }
  }
  std::size_t di = 0;
  for (auto& f : features) {
    if (f.kind != FeatureKind::kDense) continue;
    f.min = lo[di];
    f.max = hi[di];
    f.constant = !(hi[di] > lo[di]);
    ++di;
  }
  return fs;
}

double FeatureSpace::token_mean_tfidf(const std::vector<std::string>& tokens) const {
  if (tokens.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : tokens) {
    auto it = tfidf_.find(t);
    if (it != tfidf_.end()) s += it->second;
  }
  return s / static_cast<double>(tokens.size());
}

RawFeatures FeatureSpace::raw_features(const RawRecord& r) const {
  const auto& layout = schema_.layout;
  if (r.sparse.size() != layout.sparse_columns.size() || r.numeric.size() != layout.numeric_columns.size()) {
    throw DimensionError("featurize: record does not match the schema's log layout");
  }
  const FeatureFamilies& fam = schema_.families;
  RawFeatures out;
  const std::size_t ns = layout.sparse_columns.size();
  if (fam.ids) {
    for (std::size_t c = 0; c < ns; ++c) {
      auto it = ids_[c].find(r.sparse[c]);
      out.sparse_ids.push_back(it == ids_[c].end() ? kMissingId : it->second);
    }
  }
  if (fam.historical) {
    for (std::size_t c = 0; c < ns; ++c) {
      auto it = stats_[c].find(r.sparse[c]);
      if (it == stats_[c].end()) {
        out.dense.push_back(global_ctr_);
        out.dense.push_back(0.0);
      } else {
        out.dense.push_back(smoothed_ctr(it->second.clicks, it->second.impressions));
        out.dense.push_back(it->second.impressions);
      }
    }
  }
  if (fam.length) {
    out.dense.push_back(static_cast<double>(r.query.size()));
    out.dense.push_back(static_cast<double>(r.title.size()));
    out.dense.push_back(static_cast<double>(r.url.size()));
  }
  if (fam.semantic) {
    out.dense.push_back(token_mean_tfidf(r.query));
    out.dense.push_back(token_mean_tfidf(r.title));
  }
  if (fam.numeric) out.dense.insert(out.dense.end(), r.numeric.begin(), r.numeric.end());
  return out;
}

FeaturizedRecord FeatureSpace::featurize(const RawRecord& r, const Vocab& vocab, std::size_t seq_len) const {
  RawFeatures raw = raw_features(r);
  FeaturizedRecord out;
  out.tokens = encode_pair(r.query, r.ad_tokens(), vocab, seq_len);
  out.sparse_ids = std::move(raw.sparse_ids);
  const auto dense = schema_.dense();
  out.dense_values.reserve(dense.size());
  for (std::size_t i = 0; i < dense.size(); ++i) {
    out.dense_values.push_back(normalize_dense(raw.dense[i], dense[i]->min, dense[i]->max));
  }
  out.dense_raw = std::move(raw.dense);
  out.position = r.position;
  out.label = r.click;
  out.pair_key = r.pair_key();
  return out;
}

std::vector<FeaturizedRecord> FeatureSpace::featurize_all(const RawLog& log, const Vocab& vocab,
                                                          std::size_t seq_len) const {
  if (!(log.layout == schema_.layout)) throw ConfigError("featurize: log layout differs from the schema's");
  std::vector<FeaturizedRecord> out(log.records.size());
  const auto n = static_cast<long>(log.records.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = featurize(log.records[static_cast<std::size_t>(i)], vocab, seq_len);
  return out;
}

void FeatureSpace::save(const std::filesystem::path& path) const {
  json j;
  j["format"] = "ctrfusion-schema";
  j["version"] = kSchemaVersion;
  j["columns"] = {{"fixed", {"click", "position", "query", "title", "url"}},
                  {"sparse", schema_.layout.sparse_columns},
                  {"numeric", schema_.layout.numeric_columns}};
  const auto& f = schema_.families;
  j["families"] = {{"ids", f.ids},
                   {"historical", f.historical},
                   {"length", f.length},
                   {"semantic", f.semantic},
                   {"numeric", f.numeric}};
  j["features"] = json::array();
  for (const auto& d : schema_.features) {
    json e = {{"name", d.name}, {"kind", d.kind == FeatureKind::kSparse ? "sparse" : "dense"}};
    if (d.kind == FeatureKind::kSparse) {
      e["cardinality"] = d.cardinality;
    } else {
      e["min"] = d.min;
      e["max"] = d.max;
      e["constant"] = d.constant;
    }
    j["features"].push_back(e);
  }
  json tables = json::array();
  for (std::size_t c = 0; c < ids_.size(); ++c) {
    json t = json::object();
    for (const auto& [value, id] : ids_[c]) {
      const Stats& s = stats_[c].at(value);
      t[value] = {id, s.clicks, s.impressions};
    }
    tables.push_back(t);
  }
  j["id_tables"] = tables;
  j["tfidf"] = tfidf_;
  j["global_ctr"] = global_ctr_;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write schema: " + path.string());
  os << j.dump(1) << '\n';
  if (!os) throw IoError("failed writing schema: " + path.string());
}

FeatureSpace FeatureSpace::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open schema: " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw IoError("schema " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != "ctrfusion-schema") throw IoError(path.string() + " is not a schema file");
  if (j.value("version", 0) != kSchemaVersion) throw IoError("unsupported schema version in " + path.string());
  FeatureSpace fs;
  try {
    fs.schema_.layout.sparse_columns = j.at("columns").at("sparse").get<std::vector<std::string>>();
    fs.schema_.layout.numeric_columns = j.at("columns").at("numeric").get<std::vector<std::string>>();
    const auto& f = j.at("families");
    fs.schema_.families = {f.at("ids"), f.at("historical"), f.at("length"), f.at("semantic"), f.at("numeric")};
    for (const auto& e : j.at("features")) {
      FeatureDescriptor d;
      d.name = e.at("name");
      if (e.at("kind") == "sparse") {
        d.kind = FeatureKind::kSparse;
        d.cardinality = e.at("cardinality");
      } else {
        d.kind = FeatureKind::kDense;
        d.min = e.at("min");
        d.max = e.at("max");
        d.constant = e.at("constant");
      }
      fs.schema_.features.push_back(d);
    }
    for (const auto& t : j.at("id_tables")) {
      auto& ids = fs.ids_.emplace_back();
      auto& stats = fs.stats_.emplace_back();
      for (const auto& [value, entry] : t.items()) {
        ids.emplace(value, entry.at(0).get<int>());
        stats.emplace(value, Stats{entry.at(1).get<double>(), entry.at(2).get<double>()});
      }
    }
    fs.tfidf_ = j.at("tfidf").get<std::unordered_map<std::string, double>>();
    fs.global_ctr_ = j.at("global_ctr");
  } catch (const json::exception& e) {
    throw IoError("malformed schema " + path.string() + ": " + e.what());
  }
  if (fs.ids_.size() != fs.schema_.layout.sparse_columns.size()) {
    throw IoError("schema " + path.string() + ": id tables do not match sparse columns");
  }
  return fs;
}

}  // namespace ctrfusion
