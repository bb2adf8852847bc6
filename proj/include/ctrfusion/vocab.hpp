#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ctrfusion {

// Fixed ids of the special tokens; content tokens start at kFirstContentId.
enum SpecialToken : int {
  kPadId = 0,
  kClsId = 1,
  kSepId = 2,
  kMaskId = 3,
  kUnkId = 4,
  kExpId = 5,
  kNegId = 6,
};
inline constexpr int kFirstContentId = 7;

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";
inline constexpr const char* kMaskToken = "[MASK]";
inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kExpToken = "[EXP]";
inline constexpr const char* kNegToken = "[NEG]";

using Document = std::vector<std::string>;

struct TokenScore {
  std::string token;
  double score = 0.0;
};

// TF x IDF per token over a corpus of documents: TF is the total number of
// occurrences, IDF = ln(D / df). Sorted by score descending, ties by token.
std::vector<TokenScore> tfidf_ranking(const std::vector<Document>& corpus);

class Vocab {
 public:
  // Specials only.
  Vocab();

  // Specials followed by the v_max highest TF x IDF tokens.
  static Vocab build(const std::vector<Document>& corpus, std::size_t v_max);

  // Appends tokens not yet present, in order. Used for number tokens.
  void extend(const std::vector<std::string>& tokens);

  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  std::size_t content_size() const { return tokens_.size() - kFirstContentId; }
  std::vector<int> encode(const std::vector<std::string>& tokens) const;

  // One token per line in id order, specials first.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  void push(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace ctrfusion
