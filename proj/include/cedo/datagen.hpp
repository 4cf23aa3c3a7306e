#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cedo/numeric.hpp"

namespace cedo {

struct QAExample {
    std::string id;
    std::string question;
    std::string answer;
    std::string qtype; // empty until labeled; loaders keep an explicit value if present
    Vector q_feat;
    Vector v_feat;
};

enum class AnswerClass { Open, Closed };

// yes/no answers (case-insensitive) are the closed class, everything else open.
AnswerClass answer_class(const std::string& answer);

// Question type from the question's initial words: lowercase, tokenize on
// whitespace, strip surrounding punctuation, join the first prefix_len tokens.
// Questions with yes/no answers are forced into the single "yes/no" type
// regardless of their wording.
std::string label_qtype(const std::string& question, const std::string& answer,
                        std::size_t prefix_len = 2);

// One (question type, answer) group. Members keep corpus order.
struct Cluster {
    std::string qtype;
    std::string answer;
    std::vector<std::size_t> members; // indices into the input corpus
};

// Groups labeled examples by (qtype, answer). Output is ordered by qtype
// (lexicographic), then descending cluster size, ties broken by answer.
// Examples with an empty qtype field get labeled on the fly.
std::vector<Cluster> cluster_examples(const std::vector<QAExample>& corpus,
                                      std::size_t prefix_len = 2);

struct AllocationEntry {
    std::string qtype;
    std::string answer;
    std::size_t rank = 0; // 1-based within the qtype, largest cluster first
    std::size_t cluster_size = 0;
    std::size_t train_count = 0;
    std::size_t test_count = 0;
    std::string ratio_used; // "39:1", "1:39" or "3:1"
};

struct CPSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::vector<AllocationEntry> log;
};

// Prior-flipping split over the merged pool: within each question type the
// largest answer cluster goes 39:1 to train, the second-largest 1:39, and
// every further cluster 3:1. Counts are rounded half away from zero, members
// are assigned by a seeded shuffle then prefix cut, and the resulting id
// lists are returned sorted. The modal answer per question type flips between
// the two sides whenever the type has at least two clusters of sane sizes.
CPSplit cp_split(const std::vector<QAExample>& corpus, std::uint64_t seed,
                 std::size_t prefix_len = 2);

struct SynthSpec {
    std::size_t num_qtypes = 3;
    std::size_t answers_per_qtype = 4;
    std::size_t samples = 2000;
    std::size_t q_dim = 12;
    std::size_t v_dim = 12;
    double signal_strength = 0.9; // scale of the answer signal in image features
    double noise = 0.3;           // feature noise sigma
    std::uint64_t seed = 7;
};

// Synthetic corpus with the bias structure under study: question features only
// identify the question type, image features carry the answer signal, and the
// per-type answer marginal is skewed (p proportional to 1/(1+rank)) so each
// type has a clear modal answer. Question type 0 is a closed yes/no family;
// the rest are open with answers_per_qtype answers each.
std::vector<QAExample> generate_synthetic(const SynthSpec& spec);

// Corpus JSON: array of {id, question, answer, qtype?, q_feat, v_feat}.
// Loading sorts by id, rejects duplicates, and demands consistent feature
// widths (error messages name the offending record).
std::vector<QAExample> load_corpus(const std::string& path);
void save_corpus(const std::vector<QAExample>& corpus, const std::string& path);

void save_split(const CPSplit& split, const std::string& path);
CPSplit load_split(const std::string& path);

struct Accuracy {
    double all = 0.0;  // percent with 2 decimals
    double open = 0.0;
    double closed = 0.0;
    std::size_t n_all = 0;
    std::size_t n_open = 0;
    std::size_t n_closed = 0;
};

// Exact-match accuracy, overall and stratified by the truth's answer class.
// Percentages are rounded to 2 decimals; an empty stratum reports 0.00.
Accuracy evaluate(const std::vector<std::string>& predictions,
                  const std::vector<QAExample>& truth);

} // namespace cedo
