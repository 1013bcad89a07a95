#include <cmath>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include <cotkit/extraction.hpp>

using namespace cotkit;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no exception";
    return ErrorCode::InvalidArgument;
}

} // namespace

TEST(Mcq, AnchoredParenthesized) { EXPECT_EQ(extract_mcq("The answer is (B)", 3), 1u); }

TEST(Mcq, BareLowercaseLetter) { EXPECT_EQ(extract_mcq("b", 3), 1u); }

TEST(Mcq, LastAnchorWins) { EXPECT_EQ(extract_mcq("Both A and B seem right. The answer is A", 3), 0u); }

TEST(Mcq, ArticleIsNotALetter) {
    EXPECT_EQ(code_of([] { extract_mcq("The answer is a fire hydrant.", 4); }), ErrorCode::NoLetterFound);
    EXPECT_EQ(extract_mcq("It is a hydrant, so the answer is (c).", 4), 2u);
    EXPECT_EQ(extract_mcq("the answer is d.", 4), 3u);
}

TEST(Mcq, LetterOutsideRangeIgnored) {
    EXPECT_EQ(code_of([] { extract_mcq("The answer is (E)", 4); }), ErrorCode::NoLetterFound);
    EXPECT_EQ(code_of([] { extract_mcq("", 4); }), ErrorCode::NoLetterFound);
    EXPECT_EQ(code_of([] { extract_mcq("A", 1); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([] { extract_mcq("A", 27); }), ErrorCode::InvalidArgument);
}

TEST(Mcq, ResultAlwaysInRange) {
    std::mt19937_64 rng(1);
    const std::string alphabet = "abcdeABCDE() .,xyz\n";
    for (int i = 0; i < 2000; ++i) {
        std::string s(rng() % 30, ' ');
        for (auto& c : s) c = alphabet[rng() % alphabet.size()];
        const std::size_t n = 2 + rng() % 4;
        try {
            EXPECT_LT(extract_mcq(s, n), n);
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::NoLetterFound);
        }
    }
}

TEST(Open, AnchoredSpanNormalized) {
    EXPECT_EQ(extract_open("Let me think step by step. The answer is a fire hydrant."), "a fire hydrant");
    EXPECT_EQ(extract_open_detailed("Final answer: Paris! It is obvious.").rule, ExtractionRule::anchored_open);
    EXPECT_EQ(extract_open("Final answer: Paris! It is obvious."), "paris");
}

TEST(Open, DecimalPointDoesNotEndSentence) { EXPECT_EQ(extract_open("The answer is 3.5 meters. Done."), "35 meters"); }

TEST(Open, BareAnswer) {
    const auto r = extract_open_detailed("dog");
    EXPECT_EQ(r.text, "dog");
    EXPECT_EQ(r.rule, ExtractionRule::whole_output);
    EXPECT_EQ(extract_open("Dog\nbecause it barks"), "dog");
}

TEST(Open, WhitespaceOnlyIsEmpty) {
    EXPECT_EQ(code_of([] { extract_open("   "); }), ErrorCode::EmptyExtraction);
    EXPECT_EQ(code_of([] { extract_open("The answer is ..."); }), ErrorCode::EmptyExtraction);
}

TEST(Open, ResultIsNormalizedAndAnchorFree) {
    std::mt19937_64 rng(2);
    const std::vector<std::string> parts = {"The answer is", "answer:", "final", "Dog", ".", " ", ",", "the", "is",
                                            "Answer", "\n", "cat!", "x"};
    const auto cfg = default_anchors();
    for (int i = 0; i < 2000; ++i) {
        std::string s;
        for (int k = static_cast<int>(rng() % 8); k > 0; --k) s += parts[rng() % parts.size()] + " ";
        try {
            const auto out = extract_open(s);
            EXPECT_EQ(normalize(out).text, out);
            EXPECT_FALSE(out.empty());
            EXPECT_EQ(out.find("the answer is"), std::string::npos) << s;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::EmptyExtraction);
        }
    }
}

TEST(Numeric, AnchoredFirstNumber) {
    EXPECT_EQ(extract_numeric("values rise from 3 to 7, so the final answer is 7"), 7.0);
    EXPECT_EQ(extract_numeric("The answer is 12 apples, not 13"), 12.0);
}

TEST(Numeric, SingleNumber) { EXPECT_EQ(extract_numeric("about 15 people"), 15.0); }

TEST(Numeric, PercentAndGrouping) {
    EXPECT_DOUBLE_EQ(extract_numeric("growth was 3%"), 0.03);
    EXPECT_EQ(extract_numeric("revenue of 1,234,567 dollars"), 1234567.0);
    EXPECT_EQ(extract_numeric("1,2,3"), 3.0);
    EXPECT_EQ(extract_numeric("dropped to -4.5 today"), -4.5);
    EXPECT_EQ(extract_numeric("range 3-5"), 5.0);
    EXPECT_EQ(extract_numeric("a .5 share"), 0.5);
}

TEST(Numeric, FallsBackToLastNumber) {
    const auto r = extract_numeric_detailed("from 3 to 7 overall");
    EXPECT_EQ(r.value, 7.0);
    EXPECT_EQ(r.rule, ExtractionRule::last_numeric);
}

TEST(Numeric, NumberWords) {
    EXPECT_EQ(extract_numeric("The answer is twelve."), 12.0);
    EXPECT_EQ(code_of([] { extract_numeric("Someone said so"); }), ErrorCode::NoNumberFound);
    EXPECT_EQ(extract_numeric("It weighs five kilos"), 5.0);
    EXPECT_EQ(code_of([] { extract_numeric("none at all"); }), ErrorCode::NoNumberFound);
}

TEST(Numeric, GroundTruthParsing) {
    EXPECT_EQ(parse_numeric_answer("7"), 7.0);
    EXPECT_EQ(parse_numeric_answer(" 2.33 "), 2.33);
    EXPECT_EQ(parse_numeric_answer("7."), 7.0);
    EXPECT_DOUBLE_EQ(*parse_numeric_answer("25%"), 0.25);
    EXPECT_FALSE(parse_numeric_answer("2020 and 2021"));
    EXPECT_FALSE(parse_numeric_answer("USA"));
    EXPECT_FALSE(parse_numeric_answer("7 apples"));
}

TEST(Numeric, ScannerRoundTripsPrintedValues) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 1000; ++i) {
        const double v = static_cast<double>(static_cast<long long>(rng() % 2000001) - 1000000) / 100.0;
        char buf[64];
        std::snprintf(buf, sizeof buf, "the total is %.2f units", v);
        EXPECT_DOUBLE_EQ(extract_numeric(buf), v) << buf;
    }
}

TEST(Predictions, ParseAndDuplicates) {
    const auto load = parse_predictions(
        "{\"sample_id\":\"a\",\"output\":\"x\",\"extra\":1}\n\n{\"sample_id\":\"b\",\"output\":\"y\"}\n"
        "{\"sample_id\":\"a\",\"output\":\"z\"}\n");
    ASSERT_EQ(load.records.size(), 2u);
    EXPECT_EQ(load.records[0].raw_output, "x");
    EXPECT_FALSE(load.records[0].extracted);
    EXPECT_EQ(load.duplicate_ids, std::vector<std::string>{"a"});
}

TEST(Predictions, MalformedLines) {
    EXPECT_EQ(code_of([] { parse_predictions("{\"sample_id\":\"a\"}"); }), ErrorCode::MalformedRecord);
    EXPECT_EQ(code_of([] { parse_predictions("{\"output\":\"a\"}"); }), ErrorCode::MalformedRecord);
    EXPECT_EQ(code_of([] { parse_predictions("[1]"); }), ErrorCode::MalformedRecord);
    EXPECT_EQ(code_of([] { parse_predictions("{oops"); }), ErrorCode::Parse);
}

TEST(Predictions, ExtractedIffRuleAssigned) {
    PredictionRecord r;
    EXPECT_EQ(r.extracted.has_value(), r.extraction_rule.has_value());
    r.assign("dog", ExtractionRule::whole_output);
    EXPECT_TRUE(r.extracted && r.extraction_rule);
}
