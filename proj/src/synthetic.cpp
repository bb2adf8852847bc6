#include "ctrfusion/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ctrfusion/errors.hpp"

namespace ctrfusion {
namespace {

struct Text {
  std::size_t topic = 0;
  std::vector<std::string> tokens;
  std::vector<std::string> url;
};

struct User {
  double propensity = 0.0;
  std::size_t interest = 0;
  double strength = 0.0;
  int gender = 0;
  int age = 0;
};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

class Generator {
 public:
  explicit Generator(const SyntheticSpec& s) : s_(s), rng_(s.seed) {
    pool_ = std::max<std::size_t>(1, s.vocab_size * 8 / 10 / s.topics);
    general_ = s.vocab_size - pool_ * s.topics;
    for (std::size_t q = 0; q < s.queries; ++q) {
      Text t;
      t.topic = q % s.topics;
      t.tokens = draw_tokens(t.topic, s.query_min, s.query_max);
      queries_.push_back(std::move(t));
    }
    for (std::size_t a = 0; a < s.ads; ++a) {
      Text t;
      t.topic = a % s.topics;
      t.tokens = draw_tokens(t.topic, s.title_min, s.title_max);
      t.url = draw_tokens(t.topic, s.url_min, s.url_max);
      for (std::string& u : t.url) u = "u" + u;
      ads_.push_back(std::move(t));
    }
    queries_by_topic_.resize(s.topics);
    ads_by_topic_.resize(s.topics);
    for (std::size_t q = 0; q < s.queries; ++q) queries_by_topic_[queries_[q].topic].push_back(q);
    for (std::size_t a = 0; a < s.ads; ++a) ads_by_topic_[ads_[a].topic].push_back(a);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t u = 0; u < s.users; ++u) {
      User user;
      user.propensity = std::clamp(normal(rng_), -2.0, 2.0) / 2.0;
      user.interest = pick(s.topics);
      user.strength = unit(rng_);
      user.gender = static_cast<int>(pick(2));
      const double age = std::clamp(0.5 + 0.5 * user.propensity + 0.15 * normal(rng_), 0.0, 0.999);
      user.age = static_cast<int>(age * 6.0);
      users_.push_back(user);
    }
  }

  LogLayout layout() const {
    LogLayout l;
    if (s_.entity_ids) l.sparse_columns = {"user", "ad", "query"};
    for (const char* c : {"gender", "age", "interest"}) l.sparse_columns.push_back(c);
    for (std::size_t i = 0; i < s_.noise_sparse; ++i) l.sparse_columns.push_back("noise" + std::to_string(i));
    l.numeric_columns = {"activity", "loyalty"};
    for (std::size_t i = 0; i < s_.noise_numeric; ++i) l.numeric_columns.push_back("noise" + std::to_string(i));
    return l;
  }

  RawRecord record(double* truth) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t user_id = pick(s_.users);
    const User& user = users_[user_id];
    // users mostly search their interest
    const std::size_t qtopic = unit(rng_) < 0.5 ? user.interest : pick(s_.topics);
    const std::size_t query_id = from_topic(queries_by_topic_, qtopic, s_.queries);
    const std::size_t atopic = unit(rng_) < 0.5 ? queries_[query_id].topic : pick(s_.topics);
    const std::size_t ad_id = from_topic(ads_by_topic_, atopic, s_.ads);
    const Text& q = queries_[query_id];
    const Text& a = ads_[ad_id];

    RawRecord r;
    r.query = q.tokens;
    r.title = a.tokens;
    r.url = a.url;
    if (s_.entity_ids) {
      r.sparse = {"u" + std::to_string(user_id), "a" + std::to_string(ad_id), "q" + std::to_string(query_id)};
    }
    r.sparse.push_back(user.gender ? "F" : "M");
    r.sparse.push_back("age" + std::to_string(user.age));
    r.sparse.push_back("t" + std::to_string(user.interest));
    for (std::size_t i = 0; i < s_.noise_sparse; ++i) r.sparse.push_back("n" + std::to_string(pick(s_.noise_cardinality)));
    const double activity = std::clamp(std::round((user.propensity + 1.0) * 4.5 + 0.5 * normal(rng_)), 0.0, 9.0);
    r.numeric = {activity, std::round(user.strength * 10.0) / 10.0};
    for (std::size_t i = 0; i < s_.noise_numeric; ++i) r.numeric.push_back(static_cast<double>(pick(100)));
    r.position = 1 + static_cast<int>(pick(s_.positions));

    const double m_text = q.topic == a.topic ? 1.0 : -1.0;
    const double m_cross = a.topic == user.interest ? 1.0 : -1.0;
    const double base = std::log(s_.base_ctr / (1.0 - s_.base_ctr));
    const double logit = base + s_.w_text * m_text + s_.w_feat * user.propensity +
                         s_.w_cross * m_cross * user.strength - s_.position_bias * (r.position - 1);
    *truth = sigmoid(logit);
    r.click = unit(rng_) < *truth ? 1 : 0;
    return r;
  }

 private:
  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  std::size_t from_topic(const std::vector<std::vector<std::size_t>>& by_topic, std::size_t topic, std::size_t n) {
    const auto& ids = by_topic[topic];
    return ids.empty() ? pick(n) : ids[pick(ids.size())];
  }

  std::vector<std::string> draw_tokens(std::size_t topic, std::size_t lo, std::size_t hi) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t n = lo + pick(hi - lo + 1);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t id;
      if (general_ == 0 || unit(rng_) < s_.topic_purity) {
        id = topic * pool_ + pick(pool_);
      } else {
        id = pool_ * s_.topics + pick(general_);
      }
      out.push_back("w" + std::to_string(id));
    }
    return out;
  }

  const SyntheticSpec& s_;
  std::mt19937_64 rng_;
  std::size_t pool_ = 0;
  std::size_t general_ = 0;
  std::vector<Text> queries_;
  std::vector<Text> ads_;
  std::vector<std::vector<std::size_t>> queries_by_topic_;
  std::vector<std::vector<std::size_t>> ads_by_topic_;
  std::vector<User> users_;
};

}  // namespace

void SyntheticSpec::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw ConfigError(std::string("synthetic: ") + name + " must be at least 1");
  };
  positive(records, "records");
  positive(valid_records, "valid_records");
  positive(topics, "topics");
  positive(queries, "queries");
  positive(ads, "ads");
  positive(users, "users");
  positive(positions, "positions");
  positive(noise_cardinality, "noise_cardinality");
  if (vocab_size < topics) throw ConfigError("synthetic: vocab_size must be at least the topic count");
  if (query_min > query_max || title_min > title_max || url_min > url_max) {
    throw ConfigError("synthetic: length range with min > max");
  }
  for (double w : {w_text, w_feat, w_cross, position_bias}) {
    if (!std::isfinite(w)) throw ConfigError("synthetic: signal weights must be finite");
  }
  if (!(base_ctr > 0.0 && base_ctr < 1.0)) throw ConfigError("synthetic: base_ctr must lie in (0, 1)");
  if (!(topic_purity >= 0.0 && topic_purity <= 1.0)) throw ConfigError("synthetic: topic_purity must lie in [0, 1]");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Generator gen(spec);
  SyntheticData d;
  d.train.layout = gen.layout();
  d.valid.layout = gen.layout();
  d.train_truth.resize(spec.records);
  d.valid_truth.resize(spec.valid_records);
  for (std::size_t i = 0; i < spec.records; ++i) d.train.records.push_back(gen.record(&d.train_truth[i]));
  for (std::size_t i = 0; i < spec.valid_records; ++i) d.valid.records.push_back(gen.record(&d.valid_truth[i]));
  return d;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data) {
  std::filesystem::create_directories(dir);
  write_log(dir / "train.tsv", data.train);
  write_log(dir / "valid.tsv", data.valid);
  write_values(dir / "train_truth.txt", data.train_truth, "click probability per train.tsv record");
  write_values(dir / "valid_truth.txt", data.valid_truth, "click probability per valid.tsv record");
}

}  // namespace ctrfusion
