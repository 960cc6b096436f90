#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace triage {

enum class Split { train, val, test };

std::string_view split_name(Split s);
Split split_from_name(std::string_view name);

// One radiography exam: per-image embedding vectors plus tag set, report text,
// split assignment and the derived normal/abnormal label.
struct Exam {
    std::string exam_id;
    std::vector<std::vector<double>> images;  // m vectors, each of dimension d
    std::vector<std::string> tags;            // sorted, unique
    std::string report;
    Split split = Split::train;
    bool abnormal = false;  // tags non-empty
};

// Deterministic (lexicographic) tag alphabet with tag -> position lookup.
class TagVocabulary {
public:
    TagVocabulary() = default;
    explicit TagVocabulary(std::vector<std::string> tags);  // sorted + deduped

    std::size_t size() const { return tags_.size(); }
    const std::vector<std::string>& tags() const { return tags_; }
    std::optional<std::size_t> index_of(std::string_view tag) const;
    bool contains(std::string_view tag) const { return index_of(tag).has_value(); }

private:
    std::vector<std::string> tags_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

struct Corpus {
    std::vector<Exam> exams;
    TagVocabulary tag_alphabet;
    std::size_t dimension = 0;        // d, per image
    std::size_t images_per_exam = 0;  // m

    std::vector<const Exam*> split_exams(Split s) const;
    std::vector<const Exam*> abnormal_exams(Split s) const;
    const Exam* find(std::string_view exam_id) const;  // nullptr when absent
};

// Reads one JSON exam record per line; validates ids, dimensions and splits.
// expected_m, when set, rejects corpora whose image count differs.
Corpus load_corpus(const std::string& path, std::optional<std::size_t> expected_m = {});
void save_corpus(const Corpus& corpus, const std::string& path);

struct SynthConfig {
    std::uint64_t seed = 0;
    std::size_t n = 100;  // total exams; ignored when explicit counts are set
    std::size_t dimension = 1024;  // matches common CNN pooling widths
    std::size_t images_per_exam = 2;
    std::size_t tag_count = 4;
    double abnormal_fraction = 0.5;
    // Cluster shift per active tag, in units of the unit noise sigma.
    double separation = 4.0;
    double train_fraction = 0.7;
    double val_fraction = 0.1;  // test gets the remainder
    // When any of these is nonzero they override n and the fractions.
    std::size_t n_train = 0, n_val = 0, n_test = 0;
};

// Deterministic synthetic corpus: per-tag Gaussian clusters with keyword
// bearing report templates; a pure function of its configuration.
Corpus synth_corpus(const SynthConfig& config);
Corpus synth_corpus(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t m,
                    std::size_t tag_count, double abnormal_fraction);

// Images concatenated in stored order; length m*d.
std::vector<double> concat_embedding(const Exam& exam);

// Keyword naming each synthetic tag cluster (index into the fixed term list).
std::string_view synth_tag_term(std::size_t index);

}  // namespace triage
