#pragma once

#include <string>
#include <vector>

#include "ctrfusion/encoder.hpp"
#include "ctrfusion/features.hpp"
#include "ctrfusion/vocab.hpp"

namespace ctrfusion {

// Significant digits kept for non-integer values.
inline constexpr int kNumbertDigits = 4;

// Renders v as [D, "[EXP]", e] where D are the significant digits read as
// d1.d2... x 10^e, so 35 -> ["35", "[EXP]", "1"] and 0.05 -> ["5", "[EXP]", "-2"].
// Negative values start with "[NEG]"; zero is ["0", "[EXP]", "0"]. Integers
// keep up to 15 significant digits, other values kNumbertDigits.
std::vector<std::string> numbert_transform(double v);
// Inverse of numbert_transform (exact for integers of <= 15 digits).
double numbert_parse(const std::vector<std::string>& tokens);

// Values a record contributes under NumBERT: sparse ids, then raw dense values.
std::vector<double> numbert_values(const FeaturizedRecord& record);

// Number tokens of all records, most frequent first (ties by token), at most
// `limit`. Appended to the text vocabulary for NumBERT runs.
std::vector<std::string> numbert_vocab_tokens(const std::vector<FeaturizedRecord>& records, std::size_t limit);

// Unpadded text of `text` followed by one [SEP]-terminated group per value,
// padded to `length`. Groups that do not fit are dropped from the end;
// *dropped receives their count.
TokenSeq numbert_assemble(const TokenSeq& text, const std::vector<double>& values, const Vocab& vocab,
                          std::size_t length, std::size_t* dropped = nullptr);

// Token count numbert_assemble needs to fit every group.
std::size_t numbert_length(const TokenSeq& text, const std::vector<double>& values);

}  // namespace ctrfusion
