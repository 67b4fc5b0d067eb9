#include <gtest/gtest.h>

#include <numeric>
#include <regex>

#include "support.hpp"
#include "vidcurate/random.hpp"
#include "vidcurate/textmeasure.hpp"

using namespace vidcurate;
using testing_support::TempDir;

namespace {

Lexicon lexicon(std::initializer_list<std::pair<const char*, SemType>> entries) {
    Lexicon lex;
    for (const auto& [t, s] : entries) lex.add(t, s);
    return lex;
}

std::vector<std::string> texts(const std::vector<Token>& tokens) {
    std::vector<std::string> out;
    for (const auto& t : tokens) out.push_back(t.text);
    return out;
}

PematRubric rubric(int agree, int disagree, int na) {
    PematRubric r;
    int k = 0;
    for (int i = 0; i < agree; ++i) r.items.push_back({"U" + std::to_string(++k), Response::agree});
    for (int i = 0; i < disagree; ++i) r.items.push_back({"U" + std::to_string(++k), Response::disagree});
    for (int i = 0; i < na; ++i) r.items.push_back({"U" + std::to_string(++k), Response::na});
    return r;
}

}  // namespace

TEST(Tokenize, AsciiPunctuationAndCase) {
    EXPECT_EQ(texts(tokenize("Type-2 DIABETES: what's A1c?")),
              (std::vector<std::string>{"type", "2", "diabetes", "what", "s", "a1c"}));
    EXPECT_TRUE(tokenize("").empty());
    EXPECT_TRUE(tokenize(" \t\n,;").empty());
    const auto t = tokenize("  ab cd");
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[0].start, 2u);
    EXPECT_EQ(t[0].end, 4u);
    EXPECT_EQ(t[1].start, 5u);
}

TEST(Tokenize, UnicodeSeparatorsSplitButLettersStay) {
    // NBSP, em space (U+2003), ellipsis (U+2026), ideographic space
    EXPECT_EQ(texts(tokenize("insulin\xC2\xA0pump\xE2\x80\x83" "a1c\xE2\x80\xA6ok\xE3\x80\x80x")),
              (std::vector<std::string>{"insulin", "pump", "a1c", "ok", "x"}));
    // non-ASCII letters are part of tokens and are not case-folded
    EXPECT_EQ(texts(tokenize("Caf\xC3\xA9 \xC3\x89t\xC3\xA9")),
              (std::vector<std::string>{"caf\xC3\xA9", "\xC3\x89t\xC3\xA9"}));
}

TEST(ExtractTerms, WorkedExamples) {
    const auto lex = lexicon({{"insulin", SemType::treatment}, {"insulin resistance", SemType::disease}});
    const auto hits = extract_terms("insulin resistance", lex);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].canonical, "insulin resistance");
    EXPECT_EQ(hits[0].semtype, SemType::disease);
    EXPECT_TRUE(extract_terms("", lex).empty());

    const auto upper = extract_terms("INSULIN shots", lexicon({{"insulin", SemType::treatment}}));
    ASSERT_EQ(upper.size(), 1u);
    EXPECT_EQ(upper[0].start, 0u);
    EXPECT_EQ(upper[0].end, 7u);
    EXPECT_EQ(upper[0].surface, "INSULIN");
    EXPECT_EQ(normalize_term(upper[0].surface), upper[0].canonical);
}

TEST(ExtractTerms, TokenBoundariesAndSeparatorsInsideTerms) {
    const auto lex = lexicon({{"glp-1 agonist", SemType::treatment}, {"a1c", SemType::test}});
    // "HbA1c" is one token, so it does not contain "a1c"; a hyphen in a term matches any separator
    const auto hits = extract_terms("GLP 1 agonist; HbA1c vs A1C.", lex);
    ASSERT_EQ(hits.size(), 2u);
    EXPECT_EQ(hits[0].surface, "GLP 1 agonist");
    EXPECT_EQ(hits[0].tokens, 3u);
    EXPECT_EQ(hits[1].surface, "A1C");
    EXPECT_THROW(extract_terms("x", Lexicon{}), UsageError);
}

TEST(ExtractTerms, LeftmostWinsOverLongerLaterMatch) {
    // "foot ulcer care" vs terms "foot ulcer" and "ulcer care": leftmost start wins
    const auto lex = lexicon({{"foot ulcer", SemType::disease}, {"ulcer care", SemType::procedure}});
    const auto hits = extract_terms("foot ulcer care", lex);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].canonical, "foot ulcer");
}

// Oracle: all (start token, length) matches, then greedy selection scanning left to right
// keeping the longest at each free start. Written over regex-split words, independent of
// the tokenizer for ASCII input.
TEST(ExtractTerms, PropertyAgainstEnumerationOracle) {
    const std::vector<std::string> vocab{"a", "b", "c", "d", "e"};
    Rng rng(5);
    for (int trial = 0; trial < 400; ++trial) {
        Lexicon lex;
        std::set<std::string> terms;
        const auto n_terms = 1 + rng.uniform_index(6);
        while (terms.size() < n_terms) {
            std::string t;
            const auto len = 1 + rng.uniform_index(3);
            for (std::uint64_t k = 0; k < len; ++k) t += (k ? " " : "") + vocab[rng.uniform_index(vocab.size())];
            terms.insert(t);
        }
        for (const auto& t : terms) lex.add(t, SemType::disease);
        std::string text;
        const auto n_words = rng.uniform_index(15);
        for (std::uint64_t k = 0; k < n_words; ++k)
            text += vocab[rng.uniform_index(vocab.size())] + std::string(rng.bernoulli(0.2) ? ", " : " ");

        std::vector<std::string> words;
        const std::regex word_re("[a-z]+");
        for (auto it = std::sregex_iterator(text.begin(), text.end(), word_re); it != std::sregex_iterator(); ++it)
            words.push_back(it->str());
        std::vector<std::pair<std::size_t, std::size_t>> expected;  // (start word, length)
        for (std::size_t i = 0; i < words.size();) {
            std::size_t best = 0;
            for (std::size_t len = 1; i + len <= words.size() && len <= 3; ++len) {
                std::string key;
                for (std::size_t k = 0; k < len; ++k) key += (k ? " " : "") + words[i + k];
                if (terms.contains(key)) best = len;
            }
            if (best) {
                expected.emplace_back(i, best);
                i += best;
            } else {
                ++i;
            }
        }

        const auto hits = extract_terms(text, lex);
        ASSERT_EQ(hits.size(), expected.size()) << text;
        const auto tokens = tokenize(text);
        for (std::size_t h = 0; h < hits.size(); ++h) {
            EXPECT_EQ(hits[h].start, tokens[expected[h].first].start);
            EXPECT_EQ(hits[h].tokens, expected[h].second);
            EXPECT_GT(hits[h].end, hits[h].start);
            if (h) {
                EXPECT_GE(hits[h].start, hits[h - 1].end);  // sorted, non-overlapping
            }
        }
    }
}

TEST(MedScore, WorkedExamples) {
    const auto lex = lexicon({{"insulin", SemType::treatment}, {"a1c", SemType::test}});
    const std::string ten = "one two three four five six seven eight nine ten";
    EXPECT_DOUBLE_EQ(med_score(extract_terms(ten, lex), ten), 0.0);
    const std::string four = "insulin a1c insulin a1c";
    EXPECT_DOUBLE_EQ(med_score(extract_terms(four, lex), four), 1.0);
    const std::string twelve = "insulin a1c insulin x x x x x x x x x";
    EXPECT_DOUBLE_EQ(med_score(extract_terms(twelve, lex), twelve), 0.25);
    EXPECT_DOUBLE_EQ(med_score({}, ""), 0.0);
}

TEST(Classify, ThresholdsAndTies) {
    EXPECT_EQ(classify_med(0.25, 0.10), Binary::high);
    EXPECT_EQ(classify_med(0.0, 0.01), Binary::low);
    EXPECT_EQ(classify_med(0.05), Binary::high);
    EXPECT_EQ(classify_und(0.8), Binary::high);
    EXPECT_EQ(classify_und(0.5), Binary::low);
    EXPECT_EQ(classify_und(0.7), Binary::high);
    EXPECT_THROW(classify_med(0.5, 0.0), UsageError);
    EXPECT_THROW(classify_und(0.5, 1.0), UsageError);
}

TEST(Pemat, WorkedExamplesAndInvariances) {
    EXPECT_DOUBLE_EQ(pemat_score(rubric(8, 2, 2)), 0.8);
    EXPECT_DOUBLE_EQ(pemat_score(rubric(5, 0, 0)), 1.0);
    EXPECT_DOUBLE_EQ(pemat_score(rubric(0, 5, 0)), 0.0);
    EXPECT_THROW(pemat_score(rubric(0, 0, 3)), DataError);
    EXPECT_THROW(pemat_score(PematRubric{}), DataError);
    auto dup = rubric(1, 1, 0);
    dup.items[1].criterion_id = dup.items[0].criterion_id;
    EXPECT_THROW(pemat_score(dup), DataError);

    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const int a = static_cast<int>(rng.uniform_index(10)), d = static_cast<int>(rng.uniform_index(10));
        if (a + d == 0) continue;
        auto r = rubric(a, d, static_cast<int>(rng.uniform_index(4)));
        const double expected = static_cast<double>(a) / (a + d);
        EXPECT_EQ(pemat_score(r), expected);
        rng.shuffle(r.items);
        EXPECT_EQ(pemat_score(r), expected);
        r.items.push_back({"extra-na", Response::na});
        EXPECT_EQ(pemat_score(r), expected);
    }
}

TEST(Pemat, LoadRubricsCsv) {
    TempDir dir;
    testing_support::spit(dir / "r.csv", "video_id,criterion_id,response\nv1,U1,agree\nv1,U2,0\n\nv2,U1,N/A\nv2,U2,1\n");
    const auto r = load_rubrics(dir / "r.csv");
    ASSERT_EQ(r.size(), 2u);
    EXPECT_DOUBLE_EQ(pemat_score(r.at("v1")), 0.5);
    EXPECT_DOUBLE_EQ(pemat_score(r.at("v2")), 1.0);
    testing_support::spit(dir / "bad.csv", "v1,U1,maybe\n");
    EXPECT_THROW(load_rubrics(dir / "bad.csv"), DataError);
    testing_support::spit(dir / "dup.csv", "v1,U1,agree\nv1,U1,agree\n");
    EXPECT_THROW(load_rubrics(dir / "dup.csv"), DataError);
}

TEST(Lexicon, LoaderNormalizesAndRejectsBadRows) {
    TempDir dir;
    testing_support::spit(dir / "l.tsv", "# comment\nInsulin  Resistance\tdisease\nA1C\ttest\r\n");
    const auto lex = load_lexicon(dir / "l.tsv");
    EXPECT_EQ(lex.size(), 2u);
    EXPECT_EQ(lex.find("insulin resistance"), SemType::disease);
    EXPECT_EQ(lex.max_words(), 2u);
    testing_support::spit(dir / "bad.tsv", "insulin\tdrug\n");
    EXPECT_THROW(load_lexicon(dir / "bad.tsv"), DataError);
    testing_support::spit(dir / "notab.tsv", "insulin treatment\n");
    EXPECT_THROW(load_lexicon(dir / "notab.tsv"), DataError);
}

TEST(CohenKappa, WorkedExamples) {
    const std::vector<int> a{1, 1, 0, 0}, b{1, 0, 0, 0};
    EXPECT_DOUBLE_EQ(cohen_kappa(a, b), 0.5);
    EXPECT_DOUBLE_EQ(cohen_kappa(a, a), 1.0);
    const std::vector<int> same{1, 1, 1};
    EXPECT_DOUBLE_EQ(cohen_kappa(same, same), 1.0);
    EXPECT_THROW(cohen_kappa(a, std::vector<int>{1}), UsageError);
    EXPECT_THROW(cohen_kappa(std::vector<int>{}, std::vector<int>{}), UsageError);
}

// kappa = (n*agree - sum_k a_k b_k) / (n^2 - sum_k a_k b_k), evaluated in exact integers.
TEST(CohenKappa, ExhaustiveBinaryOracle) {
    for (int n = 1; n <= 8; ++n) {
        for (unsigned ma = 0; ma < (1u << n); ++ma) {
            for (unsigned mb = 0; mb < (1u << n); ++mb) {
                std::vector<int> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
                long agree = 0, a1 = 0, b1 = 0;
                for (int i = 0; i < n; ++i) {
                    a[static_cast<std::size_t>(i)] = (ma >> i) & 1;
                    b[static_cast<std::size_t>(i)] = (mb >> i) & 1;
                    agree += a[static_cast<std::size_t>(i)] == b[static_cast<std::size_t>(i)];
                    a1 += a[static_cast<std::size_t>(i)];
                    b1 += b[static_cast<std::size_t>(i)];
                }
                const long chance = a1 * b1 + (n - a1) * (n - b1);
                const long num = n * agree - chance, den = static_cast<long>(n) * n - chance;
                const double expected = den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
                const double got = cohen_kappa(a, b);
                ASSERT_NEAR(got, expected, 1e-12) << "n=" << n << " a=" << ma << " b=" << mb;
                ASSERT_EQ(got, cohen_kappa(b, a));
            }
        }
    }
}
