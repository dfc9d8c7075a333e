#include "ctiforge/error.hpp"
#include "ctiforge/regex_synthesis.hpp"

#include "mock_model_server.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace ctiforge;
using namespace ctiforge::regex;
using ctiforge::testing::default_prompts;
using ctiforge::testing::default_store;
using ctiforge::testing::FakeGateway;

namespace {

const std::string kWmic = "cmd.exe /c %System%\\wbem\\WMIC.exe shadowcopy where \"ID='GUID'\" delete";
const std::string kRunKey = "HKCU\\Software\\Run\\auto_update";

std::vector<std::string> texts(const std::vector<Substring>& subs) {
    std::vector<std::string> out;
    for (const auto& s : subs) out.push_back(s.text);
    return out;
}

std::set<std::string> with_role(const std::vector<TokenSpan>& spans, SpanRole role) {
    std::set<std::string> out;
    for (const auto& s : spans) {
        if (s.role == role) out.insert(s.text);
    }
    return out;
}

std::vector<TokenSpan> classify(const std::string& surface, IocType type) {
    FakeGateway gw;
    return classify_spans(split_ioc(surface, type), default_store(), gw);
}

extraction::IocRecord record(const std::string& surface, IocType type) {
    extraction::IocRecord r;
    r.surface = surface;
    r.canonical = extraction::normalize_candidate(surface, type);
    r.ioc_type = type;
    r.paragraph_ref = {"r", 0};
    r.status = extraction::Status::Retained;
    return r;
}

RegexPattern pattern_with(const std::string& pattern, IocType type, std::vector<std::string> signature,
                          const std::string& canonical) {
    RegexPattern p;
    p.pattern = pattern;
    p.ioc_type = type;
    p.ioc_ref = IocRef{type, canonical};
    p.signature = std::move(signature);
    p.merged_ioc_refs = {p.ioc_ref};
    return p;
}

}  // namespace

// ----------------------------------------------------------------------------
// Splitting
// ----------------------------------------------------------------------------

TEST(SplitIoc, WmicCommandTokens) {
    const auto subs = split_ioc(kWmic, IocType::CommandLine);
    EXPECT_EQ(texts(subs), (std::vector<std::string>{"cmd.exe", "/c", "%System%", "wbem", "WMIC.exe", "shadowcopy",
                                                     "where", "\"ID='GUID'\"", "delete"}));
    for (const auto& s : subs) EXPECT_EQ(kWmic.substr(s.start, s.end - s.start), s.text);
}

TEST(SplitIoc, RegistryKeyHasFourComponents) {
    const auto subs = split_ioc(kRunKey, IocType::RegistryKey);
    EXPECT_EQ(texts(subs), (std::vector<std::string>{"HKCU", "Software", "Run", "auto_update"}));
    for (const auto& s : subs) EXPECT_EQ(s.context, SpanContext::BackslashPath);
}

TEST(SplitIoc, TwoWordCommand) {
    EXPECT_EQ(texts(split_ioc("a b", IocType::CommandLine)), (std::vector<std::string>{"a", "b"}));
}

TEST(SplitIoc, TrailingArgumentDelimitersAreNotPartOfTokens) {
    const auto subs = split_ioc("rundll32.exe C:\\x\\payload.dll, StartRoutine", IocType::CommandLine);
    EXPECT_EQ(texts(subs), (std::vector<std::string>{"rundll32.exe", "C:", "x", "payload.dll", "StartRoutine"}));
}

TEST(SplitIoc, LiteralTypesUnsupported) {
    for (IocType t : {IocType::Hash, IocType::IpAddress, IocType::Domain}) {
        try {
            split_ioc("x", t);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::UnsupportedType);
        }
    }
}

// ----------------------------------------------------------------------------
// Classification
// ----------------------------------------------------------------------------

TEST(ClassifySpans, WmicGuidIsTheOnlyNonCapture) {
    const auto spans = classify(kWmic, IocType::CommandLine);
    EXPECT_EQ(with_role(spans, SpanRole::NonCapture), (std::set<std::string>{"GUID"}));
    const auto capture = with_role(spans, SpanRole::Capture);
    for (const char* expected : {"cmd.exe", "WMIC.exe", "shadowcopy", "delete"}) {
        EXPECT_TRUE(capture.count(expected)) << expected;
    }
}

TEST(ClassifySpans, RegistryValueNameIsNonCapture) {
    const auto spans = classify(kRunKey, IocType::RegistryKey);
    EXPECT_EQ(with_role(spans, SpanRole::Capture), (std::set<std::string>{"HKCU", "Software", "Run"}));
    EXPECT_EQ(with_role(spans, SpanRole::NonCapture), (std::set<std::string>{"auto_update"}));
}

TEST(ClassifySpans, UnknownTokenIsNonCapture) {
    const auto spans = classify("zzqqxx", IocType::CommandLine);
    ASSERT_EQ(spans.size(), 1u);
    EXPECT_EQ(spans[0].role, SpanRole::NonCapture);
}

TEST(ClassifySpans, FilenameStemSplitFromExtension) {
    const auto spans = classify("C:\\Users\\Public\\qzxv.dll", IocType::Filename);
    EXPECT_TRUE(with_role(spans, SpanRole::NonCapture).count("qzxv"));
    EXPECT_TRUE(with_role(spans, SpanRole::Capture).count(".dll"));
}

TEST(ClassifySpans, EmptyInputRejected) {
    FakeGateway gw;
    EXPECT_THROW(classify_spans({}, default_store(), gw), Error);
}

// ----------------------------------------------------------------------------
// Dialect and validation
// ----------------------------------------------------------------------------

TEST(Dialect, RejectsUnsafeConstructs) {
    EXPECT_FALSE(dialect_violation("(?i)abc"));
    EXPECT_FALSE(dialect_violation("a\\(b\\)[^\\\\]+"));
    EXPECT_TRUE(dialect_violation("(a)\\1"));
    EXPECT_TRUE(dialect_violation("a(?=b)"));
    EXPECT_TRUE(dialect_violation("a(?!b)"));
    EXPECT_TRUE(dialect_violation("(?<n>a)"));
    EXPECT_TRUE(dialect_violation("a++"));
    EXPECT_TRUE(dialect_violation("x(?i)y"));
}

TEST(Validate, RegistryPatternPassesAndRejectsRunOnce) {
    const auto spans = classify(kRunKey, IocType::RegistryKey);
    const std::string pattern = "(?i)HKCU\\\\Software\\\\Run\\\\[^\\\\]+";
    const auto report = validate_regex(pattern, kRunKey, spans);
    EXPECT_TRUE(report.verdict) << report.first_failure(kRunKey);
    EXPECT_FALSE(report.matches_mutants.empty());
    EXPECT_FALSE(full_match(compile(pattern), "HKCU\\Software\\RunOnce\\auto_update"));
}

TEST(Validate, UnclosedGroupFailsToCompile) {
    const auto report = validate_regex("(unclosed", "x", {});
    EXPECT_FALSE(report.compiled);
    EXPECT_FALSE(report.verdict);
    EXPECT_NE(report.first_failure("x").find("compile"), std::string::npos);
}

TEST(Validate, DotStarFailsNegatives) {
    const auto spans = classify(kRunKey, IocType::RegistryKey);
    const auto report = validate_regex(".*", kRunKey, spans);
    EXPECT_TRUE(report.compiled);
    EXPECT_TRUE(report.matches_original);
    EXPECT_FALSE(report.verdict);
    EXPECT_TRUE(std::any_of(report.rejects_negatives.begin(), report.rejects_negatives.end(),
                            [](const auto& p) { return !p.second; }));
}

TEST(Validate, OverlyLiteralPatternFailsMutants) {
    const auto spans = classify(kRunKey, IocType::RegistryKey);
    const auto report = validate_regex("(?i)" + escape(kRunKey), kRunKey, spans);
    EXPECT_FALSE(report.verdict);
    EXPECT_NE(report.first_failure(kRunKey).find("variant"), std::string::npos);
}

TEST(Mutants, OnlyNonCaptureSpansChange) {
    const auto spans = classify(kWmic, IocType::CommandLine);
    std::mt19937_64 rng(1);
    const auto mutants = make_mutants(kWmic, spans, 100, rng);
    ASSERT_EQ(mutants.size(), 100u);
    const std::string prefix = kWmic.substr(0, kWmic.find("GUID"));
    const std::string suffix = kWmic.substr(kWmic.find("GUID") + 4);
    for (const auto& m : mutants) {
        EXPECT_EQ(m.substr(0, prefix.size()), prefix);
        EXPECT_EQ(m.substr(m.size() - suffix.size()), suffix);
    }
}

// ----------------------------------------------------------------------------
// Patterns
// ----------------------------------------------------------------------------

TEST(Literal, IpIsEscapedWithoutFlag) {
    const auto p = synthesize_literal(record("10.1.2.3", IocType::IpAddress));
    EXPECT_EQ(p.pattern, "10\\.1\\.2\\.3");
    EXPECT_EQ(p.origin, Origin::Literal);
    EXPECT_TRUE(p.validation.verdict);
}

TEST(Literal, DomainIsCaseInsensitiveLowercase) {
    const auto p = synthesize_literal(record("Evil.Example.COM", IocType::Domain));
    EXPECT_EQ(p.pattern, "(?i)evil\\.example\\.com");
    EXPECT_TRUE(full_match(compile(p.pattern), "EVIL.example.com"));
}

TEST(Literal, StructuredTypesRejected) {
    EXPECT_THROW(synthesize_literal(record("a.exe", IocType::Filename)), Error);
}

TEST(Fallback, AllCaptureIsPlainEscape) {
    const auto spans = classify("cmd.exe", IocType::CommandLine);
    EXPECT_EQ(fallback_pattern("cmd.exe", IocType::CommandLine, spans), "(?i)cmd\\.exe");
}

TEST(Fallback, WmicPatternValidates) {
    const auto spans = classify(kWmic, IocType::CommandLine);
    const std::string p = fallback_pattern(kWmic, IocType::CommandLine, spans);
    const auto report = validate_regex(p, kWmic, spans);
    EXPECT_TRUE(report.verdict) << p << ": " << report.first_failure(kWmic);
}

TEST(Synthesize, ModelAnswerAcceptedFirstTry) {
    FakeGateway gw([](const gateway::Prompt& p) { return ctiforge::testing::regex_from_annotations(p.user_text); });
    const auto r = record(kRunKey, IocType::RegistryKey);
    const auto spans = classify(kRunKey, IocType::RegistryKey);
    const auto p = synthesize_regex(r, spans, gw, default_prompts());
    EXPECT_EQ(p.origin, Origin::Model);
    EXPECT_EQ(p.attempts, 1);
    EXPECT_TRUE(p.validation.verdict);
    EXPECT_EQ(p.signature, (std::vector<std::string>{"hkcu", "software", "run"}));
}

TEST(Synthesize, RefineCarriesFeedbackThenSucceeds) {
    FakeGateway gw([](const gateway::Prompt& p) -> std::string {
        if (p.task_tag == gateway::TaskTag::GenerateRegex) return R"({"regex": ".*"})";
        return ctiforge::testing::regex_from_annotations(p.user_text);
    });
    const auto spans = classify(kRunKey, IocType::RegistryKey);
    const auto p = synthesize_regex(record(kRunKey, IocType::RegistryKey), spans, gw, default_prompts());
    EXPECT_EQ(p.origin, Origin::Model);
    EXPECT_EQ(p.attempts, 2);
    const auto prompts = gw.prompts();
    ASSERT_EQ(prompts.size(), 2u);
    EXPECT_EQ(prompts[1].task_tag, gateway::TaskTag::RefineRegex);
    EXPECT_NE(prompts[1].user_text.find("must NOT match"), std::string::npos);
    EXPECT_EQ(prompts[1].run_index, 1);
}

TEST(Synthesize, GarbageModelFallsBackToValidTemplate) {
    FakeGateway gw([](const gateway::Prompt&) { return "I cannot help with that ((("; });
    for (const auto& [surface, type] : std::vector<std::pair<std::string, IocType>>{
             {kWmic, IocType::CommandLine},
             {kRunKey, IocType::RegistryKey},
             {"C:\\Users\\Public\\qzxv.dll", IocType::Filename},
             {"rundll32.exe C:\\x\\payload.dll, StartRoutine", IocType::CommandLine}}) {
        const auto spans = classify(surface, type);
        const auto p = synthesize_regex(record(surface, type), spans, gw, default_prompts());
        EXPECT_EQ(p.origin, Origin::Fallback);
        EXPECT_EQ(p.attempts, 4);
        EXPECT_TRUE(p.validation.verdict) << surface << " -> " << p.pattern;
    }
}

TEST(ExtractPattern, ReadsJsonFenceOrLine) {
    EXPECT_EQ(extract_pattern(R"({"regex": "a\\.b"})"), "a\\.b");
    EXPECT_EQ(extract_pattern("```regex\n(?i)x\\.y\n```"), "(?i)x\\.y");
    EXPECT_EQ(extract_pattern("\n  abc  \nmore"), "abc");
}

// ----------------------------------------------------------------------------
// Dedup
// ----------------------------------------------------------------------------

TEST(Dedup, SharedSignatureCollapsesToOne) {
    // n = 5 patterns, k = 3 share a signature: expect n - k + 1 = 3.
    const std::vector<std::string> sig{"hkcu", "software", "run"};
    std::vector<RegexPattern> ps{
        pattern_with("(?i)HKCU\\\\Software\\\\Run\\\\[^\\\\]+", IocType::RegistryKey, sig, "a"),
        pattern_with("(?i)hkcu\\\\software\\\\run\\\\[^\\\\]+", IocType::RegistryKey, sig, "b"),
        pattern_with("(?i)HKCU\\\\Software\\\\Run\\\\\\S+", IocType::RegistryKey, sig, "c"),
        pattern_with("(?i)x", IocType::Filename, {"x"}, "d"),
        pattern_with("(?i)y", IocType::Filename, {"y"}, "e")};
    const auto out = dedup_patterns(ps);
    ASSERT_EQ(out.size(), 3u);
    const auto rep = std::find_if(out.begin(), out.end(), [](const RegexPattern& p) { return p.ioc_type == IocType::RegistryKey; });
    ASSERT_NE(rep, out.end());
    EXPECT_EQ(rep->merged_ioc_refs.size(), 3u);
    // Lexicographically smallest pattern represents the group.
    EXPECT_EQ(rep->pattern, "(?i)HKCU\\\\Software\\\\Run\\\\[^\\\\]+");
    EXPECT_EQ(dedup_patterns(out).size(), out.size());
}

TEST(Dedup, IdempotentOnRandomInputs) {
    std::mt19937 rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<RegexPattern> ps;
        const int n = 1 + static_cast<int>(rng() % 12);
        for (int i = 0; i < n; ++i) {
            const auto type = rng() % 2 == 0 ? IocType::Filename : IocType::CommandLine;
            std::vector<std::string> sig;
            const int len = static_cast<int>(rng() % 3);
            for (int j = 0; j < len; ++j) sig.push_back(std::string(1, static_cast<char>('a' + rng() % 3)));
            ps.push_back(pattern_with("p" + std::to_string(rng() % 5), type, sig, "c" + std::to_string(i)));
        }
        const auto once = dedup_patterns(ps);
        const auto twice = dedup_patterns(once);
        ASSERT_EQ(once.size(), twice.size());
        std::size_t refs = 0;
        for (std::size_t i = 0; i < once.size(); ++i) {
            EXPECT_EQ(once[i].pattern, twice[i].pattern);
            EXPECT_EQ(once[i].merged_ioc_refs, twice[i].merged_ioc_refs);
            refs += once[i].merged_ioc_refs.size();
        }
        EXPECT_EQ(refs, static_cast<std::size_t>(n));
    }
}
