#include "ctrfusion/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_set>

#include "ctrfusion/errors.hpp"

namespace ctrfusion {

std::vector<TokenScore> tfidf_ranking(const std::vector<Document>& corpus) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> stats;  // token -> (tf, df)
  for (const Document& doc : corpus) {
    std::unordered_set<std::string_view> seen;
    for (const std::string& tok : doc) {
      auto& s = stats[tok];
      ++s.first;
      if (seen.insert(tok).second) ++s.second;
    }
  }
  const double docs = static_cast<double>(corpus.size());
  std::vector<TokenScore> out;
  out.reserve(stats.size());
  for (const auto& [tok, s] : stats) {
    out.push_back({tok, static_cast<double>(s.first) * std::log(docs / static_cast<double>(s.second))});
  }
  std::stable_sort(out.begin(), out.end(), [](const TokenScore& a, const TokenScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.token < b.token;
  });
  return out;
}

Vocab::Vocab() {
  for (const char* s : {kPadToken, kClsToken, kSepToken, kMaskToken, kUnkToken, kExpToken, kNegToken}) push(s);
}

Vocab Vocab::build(const std::vector<Document>& corpus, std::size_t v_max) {
  if (corpus.empty()) throw Error("build_vocab: empty corpus");
  Vocab v;
  for (const TokenScore& s : tfidf_ranking(corpus)) {
    if (v.content_size() >= v_max) break;
    if (!v.contains(s.token)) v.push(s.token);
  }
  return v;
}

void Vocab::extend(const std::vector<std::string>& tokens) {
  for (const auto& t : tokens) {
    if (!contains(t)) push(t);
  }
}

void Vocab::push(std::string token) {
  if (token.empty() || token.find_first_of(" \t\r\n") != std::string::npos) {
    throw Error("vocab: token must be non-empty and contain no whitespace: '" + token + "'");
  }
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

int Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocab::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("vocab: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write vocab: " + path.string());
  for (const auto& t : tokens_) os << t << '\n';
  if (!os) throw IoError("failed writing vocab: " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open vocab: " + path.string());
  Vocab v;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    if (n < static_cast<std::size_t>(kFirstContentId)) {
      if (line != v.tokens_[n]) {
        throw IoError("vocab " + path.string() + ": line " + std::to_string(n + 1) + " should be " + v.tokens_[n]);
      }
    } else {
      if (v.contains(line)) throw IoError("vocab " + path.string() + ": duplicate token '" + line + "'");
      v.push(line);
    }
    ++n;
  }
  if (n < static_cast<std::size_t>(kFirstContentId)) throw IoError("vocab " + path.string() + " is missing specials");
  return v;
}

}  // namespace ctrfusion
