// Independent reference implementations used by the unit and acceptance
// suites. Everything here is deliberately naive (plain loops, exhaustive
// enumeration) and must stay decoupled from the library's implementations.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracles {

inline double naive_dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline std::vector<double> naive_matvec(const std::vector<std::vector<double>>& rows,
                                        const std::vector<double>& x) {
    std::vector<double> y(rows.size(), 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < x.size(); ++c) y[r] += rows[r][c] * x[c];
    return y;
}

inline double dcg(const std::vector<int>& rel, std::size_t k) {
    double s = 0.0;
    for (std::size_t i = 0; i < std::min(k, rel.size()); ++i)
        s += rel[i] / std::log2(static_cast<double>(i) + 2.0);
    return s;
}

// nDCG with the ideal ordering found by trying every permutation.
inline double ndcg_exhaustive(std::vector<int> rel, std::size_t k) {
    const double val = dcg(rel, k);
    std::vector<int> perm = rel;
    std::sort(perm.begin(), perm.end());
    double best = 0.0;
    do {
        best = std::max(best, dcg(perm, k));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best == 0.0 ? 0.0 : val / best;
}

// Longest common subsequence by enumerating every subsequence of `a` and
// testing whether it is a subsequence of `b`. Only usable for |a| <= ~16.
inline std::size_t lcs_exhaustive(const std::vector<std::string>& a,
                                  const std::vector<std::string>& b) {
    std::size_t best = 0;
    for (std::size_t mask = 0; mask < (1u << a.size()); ++mask) {
        std::vector<std::string> sub;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (mask & (1u << i)) sub.push_back(a[i]);
        std::size_t j = 0;
        for (const std::string& tok : b) {
            if (j < sub.size() && tok == sub[j]) ++j;
        }
        if (j == sub.size()) best = std::max(best, sub.size());
    }
    return best;
}

inline double tag_relevance_brute(const std::vector<std::string>& predicted,
                        const std::vector<std::string>& gold_alphabet) {
    std::set<std::string> t(predicted.begin(), predicted.end());
    std::set<std::string> g(gold_alphabet.begin(), gold_alphabet.end());
    std::size_t hits = 0;
    for (const std::string& tag : t)
        if (g.count(tag)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(g.size());
}

// Corpus BLEU-4 evaluated directly from clipped n-gram counts.
inline double bleu_direct(const std::vector<std::vector<std::string>>& cands,
                          const std::vector<std::vector<std::string>>& refs) {
    double cand_len = 0.0, ref_len = 0.0;
    double log_p = 0.0;
    for (int n = 1; n <= 4; ++n) {
        double match = 0.0, total = 0.0;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            std::map<std::vector<std::string>, int> cc, rc;
            for (std::size_t s = 0; s + n <= cands[i].size(); ++s)
                ++cc[std::vector<std::string>(cands[i].begin() + s, cands[i].begin() + s + n)];
            for (std::size_t s = 0; s + n <= refs[i].size(); ++s)
                ++rc[std::vector<std::string>(refs[i].begin() + s, refs[i].begin() + s + n)];
            for (const auto& [gram, count] : cc) {
                total += count;
                const auto it = rc.find(gram);
                if (it != rc.end()) match += std::min(count, it->second);
            }
        }
        if (match == 0.0 || total == 0.0) return 0.0;
        log_p += std::log(match / total);
    }
    for (std::size_t i = 0; i < cands.size(); ++i) {
        cand_len += static_cast<double>(cands[i].size());
        ref_len += static_cast<double>(refs[i].size());
    }
    const double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
    return 100.0 * bp * std::exp(log_p / 4.0);
}

}  // namespace oracles
