#include "ctiforge/error.hpp"
#include "ctiforge/ingest.hpp"
#include "ctiforge/text.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ctiforge;
using namespace ctiforge::ingest;
using ctiforge::testing::TempDir;

namespace {

std::string write_temp(const TempDir& dir, const std::string& name, const std::string& bytes) {
    const std::string path = dir.str(name);
    text::write_file(path, bytes);
    return path;
}

std::string n_sentences(int n) {
    std::string s;
    for (int i = 0; i < n; ++i) s += "Sentence number " + std::to_string(i) + " is here. ";
    return s;
}

}  // namespace

TEST(LoadReport, PlainTextPassesThrough) {
    TempDir dir;
    const auto r = load_report(write_temp(dir, "report.txt", "A. B. C."), FormatHint::Plain);
    EXPECT_EQ(r.raw_text, "A. B. C.");
    EXPECT_EQ(r.source_id, "report");
    EXPECT_EQ(r.format_hint, FormatHint::Plain);
}

TEST(LoadReport, HtmlTagsAreStripped) {
    TempDir dir;
    const auto r = load_report(write_temp(dir, "report.html", "<p>Hello.</p>"), FormatHint::Html);
    EXPECT_EQ(r.raw_text, "Hello.");
}

TEST(LoadReport, WhitespaceOnlyIsEmptyDocument) {
    TempDir dir;
    const auto path = write_temp(dir, "empty.txt", "  \n\t \n");
    try {
        load_report(path, FormatHint::Plain);
        FAIL() << "expected EmptyDocument";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyDocument);
    }
}

TEST(LoadReport, MissingFileIsFileNotFound) {
    try {
        load_report("/nonexistent/definitely/missing.txt", FormatHint::Plain);
        FAIL() << "expected FileNotFound";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::FileNotFound);
    }
}

TEST(LoadReport, InvalidUtf8IsReplacedNotRejected) {
    const auto r = make_report("x", std::string("bad \xff byte."), FormatHint::Plain);
    EXPECT_NE(r.raw_text.find("\xEF\xBF\xBD"), std::string::npos);
}

TEST(FormatFromPath, UsesExtension) {
    EXPECT_EQ(format_from_path("a/b/report.HTML"), FormatHint::Html);
    EXPECT_EQ(format_from_path("x.htm"), FormatHint::Html);
    EXPECT_EQ(format_from_path("x.md"), FormatHint::Markdown);
    EXPECT_EQ(format_from_path("x.txt"), FormatHint::Plain);
    EXPECT_EQ(format_from_path("noext"), FormatHint::Plain);
}

TEST(StripHtml, DropsScriptsAndDecodesEntities) {
    const std::string out = strip_html(
        "<html><head><style>p{}</style><script>var x = 1;</script></head>"
        "<body><p>Tom &amp; Jerry &lt;3 &#x41;&#66;</p><!-- note --></body></html>");
    EXPECT_EQ(text::collapse_whitespace(out), "Tom & Jerry <3 AB");
}

TEST(StripHtml, KeepsPreContentVerbatim) {
    const std::string out = strip_html("<p>Run:</p><pre>cmd.exe  /c   dir</pre>");
    EXPECT_NE(out.find("cmd.exe  /c   dir"), std::string::npos);
}

TEST(StripHtml, LoneLessThanIsLiteral) {
    EXPECT_EQ(text::collapse_whitespace(strip_html("<p>a < b</p>")), "a < b");
}

TEST(StripMarkdown, RemovesMarkupKeepsText) {
    const std::string md =
        "# Title\n\nSome **bold** and *italic* text with `spools.exe` and a [link](http://x.y).\n\n"
        "- item one\n- item two\n\n> quoted\n\n```\ncmd.exe /c dir\n```\n";
    const std::string out = strip_markdown(md);
    EXPECT_EQ(out.find('#'), std::string::npos);
    EXPECT_EQ(out.find("**"), std::string::npos);
    EXPECT_EQ(out.find("]("), std::string::npos);
    EXPECT_NE(out.find("spools.exe"), std::string::npos);
    EXPECT_NE(out.find("cmd.exe /c dir"), std::string::npos);
    EXPECT_NE(out.find("link"), std::string::npos);
}

TEST(SplitSentences, FilenameDotIsNotABoundary) {
    const auto s = split_sentences("It drops spools.exe. Then it runs.");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0], "It drops spools.exe.");
    EXPECT_EQ(s[1], "Then it runs.");
}

TEST(SplitSentences, AbbreviationsDoNotSplit) {
    const auto s = split_sentences("Tools, e.g. Mimikatz, were used. It also used i.e. PsExec. Done.");
    EXPECT_EQ(s.size(), 3u);
}

TEST(SplitSentences, DomainsAndVersionsStayWhole) {
    const auto s = split_sentences("It beacons to evil.example.com every 5 min. Version 1.2.3 was seen.");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_NE(s[0].find("evil.example.com"), std::string::npos);
}

TEST(SplitSentences, UnsegmentableBlobIsOneSentence) {
    const auto s = split_sentences("no terminal punctuation at all here");
    ASSERT_EQ(s.size(), 1u);
}

TEST(SegmentParagraphs, EightSentencesTargetFour) {
    const auto r = make_report("r", n_sentences(8), FormatHint::Plain);
    const auto ps = segment_paragraphs(r, 4);
    ASSERT_EQ(ps.size(), 2u);
    EXPECT_EQ(ps[0].sentence_count, 4);
    EXPECT_EQ(ps[1].sentence_count, 4);
}

TEST(SegmentParagraphs, NineSentencesTargetFourLeavesRemainder) {
    const auto r = make_report("r", n_sentences(9), FormatHint::Plain);
    const auto ps = segment_paragraphs(r, 4);
    ASSERT_EQ(ps.size(), 3u);
    EXPECT_EQ(ps[0].sentence_count, 4);
    EXPECT_EQ(ps[1].sentence_count, 4);
    EXPECT_EQ(ps[2].sentence_count, 1);
}

TEST(SegmentParagraphs, SpoolsExampleIsOneParagraph) {
    const auto r = make_report("r", "It drops spools.exe. Then it runs.", FormatHint::Plain);
    const auto ps = segment_paragraphs(r, 4);
    ASSERT_EQ(ps.size(), 1u);
    EXPECT_EQ(ps[0].sentence_count, 2);
}

TEST(SegmentParagraphs, TargetOutsideThreeToFourIsRejected) {
    const auto r = make_report("r", "A. B.", FormatHint::Plain);
    EXPECT_THROW(segment_paragraphs(r, 2), Error);
    EXPECT_THROW(segment_paragraphs(r, 5), Error);
}

TEST(SegmentParagraphs, PropertiesOnRandomText) {
    std::mt19937 rng(7);
    const std::vector<std::string> words{"malware", "spools.exe", "the", "HKCU\\Software\\Run\\x", "e.g.",
                                         "10.0.0.1", "It", "Then", "drops", "C:\\Users\\Public"};
    for (int trial = 0; trial < 50; ++trial) {
        std::string doc;
        const int n = 1 + static_cast<int>(rng() % 30);
        for (int i = 0; i < n; ++i) {
            doc += "Start";
            for (int w = 0; w < 5; ++w) doc += " " + words[rng() % words.size()];
            doc += (rng() % 5 == 0) ? "!\n\n" : ". ";
        }
        for (int target : {3, 4}) {
            const auto r = make_report("r", doc, FormatHint::Plain);
            const auto ps = segment_paragraphs(r, target);
            std::vector<std::string> texts;
            for (std::size_t i = 0; i < ps.size(); ++i) {
                EXPECT_EQ(ps[i].index, static_cast<int>(i));
                EXPECT_GE(ps[i].sentence_count, 1);
                EXPECT_LE(ps[i].sentence_count, target);
                texts.push_back(ps[i].text);
            }
            EXPECT_EQ(text::collapse_whitespace(text::join(texts, " ")), text::collapse_whitespace(r.raw_text));
            // Determinism.
            const auto again = segment_paragraphs(r, target);
            ASSERT_EQ(again.size(), ps.size());
            for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_EQ(again[i].text, ps[i].text);
        }
    }
}
