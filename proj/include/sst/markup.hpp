#pragma once
// Structured-trace markup: <chain>...</chain> abstract plans, <think>...</think>
// reasoning regions and \boxed{...} final answers, tracked as byte spans over
// the original text. Strict parsing is used for gold data (any malformation is
// an error); model outputs go through the lenient analyze_output path.

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sst/errors.hpp"
#include "sst/strutil.hpp"

namespace sst {

constexpr std::string_view kChainOpen = "<chain>";
constexpr std::string_view kChainClose = "</chain>";
constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kBoxedOpen = "\\boxed{";

enum class SpanKind { chain, think, boxed };

struct MarkupSpan {
    SpanKind kind;
    // [byte_start, byte_end) covers the delimiters, [inner_start, inner_end) the content
    size_t byte_start = 0, byte_end = 0;
    size_t inner_start = 0, inner_end = 0;
};

enum class TraceLayout { chain_trailing, chain_leading };

struct AnnotatedTrace {
    std::string text;
    std::vector<MarkupSpan> spans; // sorted by byte_start
    TraceLayout layout = TraceLayout::chain_trailing;

    std::vector<MarkupSpan> spans_of(SpanKind k) const {
        std::vector<MarkupSpan> out;
        for (const auto& s : spans)
            if (s.kind == k) out.push_back(s);
        return out;
    }
    std::optional<MarkupSpan> first_span(SpanKind k) const {
        for (const auto& s : spans)
            if (s.kind == k) return s;
        return std::nullopt;
    }
    std::string_view inner(const MarkupSpan& s) const {
        return std::string_view(text).substr(s.inner_start, s.inner_end - s.inner_start);
    }
};

namespace detail {

inline bool whitespace_only(std::string_view s) {
    return trim(s).empty();
}

// leading layout = first chain sits at the (whitespace-trimmed) start of a think region
inline TraceLayout infer_layout(const AnnotatedTrace& t) {
    auto chain = t.first_span(SpanKind::chain);
    if (!chain) return TraceLayout::chain_trailing;
    for (const auto& th : t.spans) {
        if (th.kind != SpanKind::think) continue;
        if (th.inner_start <= chain->byte_start && chain->byte_end <= th.inner_end &&
            whitespace_only(std::string_view(t.text).substr(th.inner_start, chain->byte_start - th.inner_start)))
            return TraceLayout::chain_leading;
    }
    return TraceLayout::chain_trailing;
}

} // namespace detail

// Strict single-pass parse. Errors: nested chains, any other overlap between
// regions, unterminated/stray delimiters, more than one \boxed{}.
inline AnnotatedTrace parse_markup(std::string_view text) {
    AnnotatedTrace out;
    out.text = std::string(text);
    bool chain_open = false, think_open = false, seen_boxed = false;
    size_t chain_outer = 0, chain_inner = 0, think_outer = 0, think_inner = 0;
    size_t i = 0;
    auto here = [&](std::string_view tok) { return text.substr(i).starts_with(tok); };
    auto ctx = [&] { return " at byte " + std::to_string(i); };
    while (i < text.size()) {
        if (here(kChainOpen)) {
            expect(!chain_open, Errc::nested_chain, "<chain> inside <chain>" + ctx());
            chain_open = true;
            chain_outer = i;
            chain_inner = i + kChainOpen.size();
            i += kChainOpen.size();
        } else if (here(kChainClose)) {
            expect(chain_open, Errc::unbalanced_tag, "stray </chain>" + ctx());
            out.spans.push_back({SpanKind::chain, chain_outer, i + kChainClose.size(), chain_inner, i});
            chain_open = false;
            i += kChainClose.size();
        } else if (here(kThinkOpen)) {
            expect(!think_open, Errc::unbalanced_tag, "<think> inside <think>" + ctx());
            expect(!chain_open, Errc::unbalanced_tag, "<think> may not open inside <chain>" + ctx());
            think_open = true;
            think_outer = i;
            think_inner = i + kThinkOpen.size();
            i += kThinkOpen.size();
        } else if (here(kThinkClose)) {
            expect(think_open, Errc::unbalanced_tag, "stray </think>" + ctx());
            expect(!chain_open, Errc::unbalanced_tag, "<chain> crosses </think>" + ctx());
            out.spans.push_back({SpanKind::think, think_outer, i + kThinkClose.size(), think_inner, i});
            think_open = false;
            i += kThinkClose.size();
        } else if (here(kBoxedOpen)) {
            expect(!seen_boxed, Errc::multiple_boxed, "second \\boxed{}" + ctx());
            expect(!chain_open && !think_open, Errc::unbalanced_tag, "\\boxed{} inside chain/think" + ctx());
            size_t j = i + kBoxedOpen.size();
            int depth = 1;
            while (j < text.size() && depth > 0) {
                if (text[j] == '{') ++depth;
                else if (text[j] == '}') --depth;
                ++j;
            }
            expect(depth == 0, Errc::unbalanced_tag, "unterminated \\boxed{" + ctx());
            out.spans.push_back({SpanKind::boxed, i, j, i + kBoxedOpen.size(), j - 1});
            seen_boxed = true;
            i = j;
        } else {
            ++i;
        }
    }
    expect(!chain_open, Errc::unbalanced_tag, "unterminated <chain>");
    expect(!think_open, Errc::unbalanced_tag, "unterminated <think>");
    std::sort(out.spans.begin(), out.spans.end(),
              [](const MarkupSpan& a, const MarkupSpan& b) { return a.byte_start < b.byte_start; });
    out.layout = detail::infer_layout(out);
    return out;
}

// Answer extraction works on raw text, independent of span validity: the last
// \boxed{ must brace-balance; the content is returned verbatim minus outer
// whitespace (nested braces preserved).
inline std::optional<std::string> try_extract_boxed_answer(std::string_view text) {
    size_t pos = text.rfind(kBoxedOpen);
    if (pos == std::string_view::npos) return std::nullopt;
    size_t j = pos + kBoxedOpen.size();
    int depth = 1;
    while (j < text.size() && depth > 0) {
        if (text[j] == '{') ++depth;
        else if (text[j] == '}') --depth;
        ++j;
    }
    if (depth != 0) return std::nullopt;
    return std::string(trim(text.substr(pos + kBoxedOpen.size(), j - 1 - (pos + kBoxedOpen.size()))));
}

inline std::string extract_boxed_answer(std::string_view text) {
    auto a = try_extract_boxed_answer(text);
    expect(a.has_value(), Errc::no_boxed_answer, "no balanced \\boxed{} in text");
    return *a;
}

// Lenient analysis for model outputs: never throws. format_ok means the text
// parses strictly; the boxed answer is recovered even from malformed text.
struct OutputAnalysis {
    bool format_ok = false;
    AnnotatedTrace trace; // spans empty when !format_ok
    std::optional<std::string> answer;
};

inline OutputAnalysis analyze_output(std::string_view text) {
    OutputAnalysis out;
    try {
        out.trace = parse_markup(text);
        out.format_ok = true;
    } catch (const Error&) {
        out.trace.text = std::string(text);
        out.trace.spans.clear();
        out.format_ok = false;
    }
    out.answer = try_extract_boxed_answer(text);
    return out;
}

// Removes every chain region (delimiters and content); everything else is
// preserved byte-for-byte. Idempotent.
inline std::string strip_chain(const AnnotatedTrace& t) {
    std::string out;
    out.reserve(t.text.size());
    size_t cur = 0;
    for (const auto& s : t.spans) {
        if (s.kind != SpanKind::chain) continue;
        out.append(t.text, cur, s.byte_start - cur);
        cur = s.byte_end;
    }
    out.append(t.text, cur, t.text.size() - cur);
    return out;
}

inline std::string strip_chain(std::string_view text) { return strip_chain(parse_markup(text)); }

namespace detail {

inline void check_no_delimiters(std::string_view part, std::string_view what) {
    for (std::string_view d : {kChainOpen, kChainClose, kThinkOpen, kThinkClose, kBoxedOpen})
        expect(part.find(d) == std::string_view::npos, Errc::delimiter_in_content,
               std::string(what) + " contains '" + std::string(d) + "'");
}

inline void check_answer_braces(std::string_view answer) {
    int depth = 0;
    for (char c : answer) {
        if (c == '{') ++depth;
        else if (c == '}') --depth;
        expect(depth >= 0, Errc::delimiter_in_content, "answer closes a brace it never opened");
    }
    expect(depth == 0, Errc::delimiter_in_content, "answer has unbalanced braces");
}

} // namespace detail

struct TraceParts {
    std::string chain, steps, answer;
};

// Deterministic assembly; parse(compose(...)) recovers the parts exactly.
// No separators are inserted: callers own all whitespace via chain/steps.
inline AnnotatedTrace compose_trace(std::string_view chain, std::string_view steps,
                                    std::string_view answer, TraceLayout layout) {
    detail::check_no_delimiters(chain, "chain");
    detail::check_no_delimiters(steps, "steps");
    detail::check_no_delimiters(answer, "answer");
    detail::check_answer_braces(answer);
    std::string text;
    if (layout == TraceLayout::chain_trailing) {
        text.append(steps);
        text.append(kChainOpen).append(chain).append(kChainClose);
        text.append(kBoxedOpen).append(answer).append("}");
    } else {
        text.append(kThinkOpen);
        text.append(kChainOpen).append(chain).append(kChainClose);
        text.append(steps);
        text.append(kThinkClose);
        text.append(kBoxedOpen).append(answer).append("}");
    }
    AnnotatedTrace t = parse_markup(text);
    expect(t.layout == layout, Errc::unbalanced_tag, "composed trace does not round-trip its layout");
    return t;
}

// Gold traces carry exactly one chain and exactly one boxed answer.
inline void validate_gold_trace(const AnnotatedTrace& t) {
    expect(t.spans_of(SpanKind::chain).size() == 1, Errc::unbalanced_tag,
           "gold trace must contain exactly one chain");
    expect(t.spans_of(SpanKind::boxed).size() == 1, Errc::no_boxed_answer,
           "gold trace must contain exactly one \\boxed{}");
}

// Inverse of compose_trace for gold traces.
inline TraceParts decompose_trace(const AnnotatedTrace& t) {
    validate_gold_trace(t);
    MarkupSpan chain = *t.first_span(SpanKind::chain);
    MarkupSpan boxed = *t.first_span(SpanKind::boxed);
    TraceParts p;
    p.chain = std::string(t.inner(chain));
    p.answer = std::string(t.text.substr(boxed.inner_start, boxed.inner_end - boxed.inner_start));
    if (t.layout == TraceLayout::chain_leading) {
        MarkupSpan think = *t.first_span(SpanKind::think);
        p.steps = t.text.substr(chain.byte_end, think.inner_end - chain.byte_end);
    } else {
        p.steps = t.text.substr(0, chain.byte_start);
    }
    return p;
}

// --- answer canonicalization -------------------------------------------------

namespace detail {

inline bool parse_plain_int(std::string_view s, long long& out) {
    s = trim(s);
    if (s.empty()) return false;
    size_t i = (s[0] == '+' || s[0] == '-') ? 1 : 0;
    if (i == s.size()) return false;
    for (size_t k = i; k < s.size(); ++k)
        if (s[k] < '0' || s[k] > '9') return false;
    if (s.size() - i > 18) return false; // avoid overflow, leave huge values verbatim
    long long v = 0;
    for (size_t k = i; k < s.size(); ++k) v = v * 10 + (s[k] - '0');
    out = (s[0] == '-') ? -v : v;
    return true;
}

inline std::string canon_int(long long v) { return std::to_string(v); }

// "a/b" or "\frac{a}{b}" with integer parts
inline bool parse_rational(std::string_view s, long long& num, long long& den) {
    s = trim(s);
    if (s.starts_with("\\frac{")) {
        size_t close1 = s.find('}', 6);
        if (close1 == std::string_view::npos) return false;
        if (close1 + 1 >= s.size() || s[close1 + 1] != '{') return false;
        if (s.back() != '}') return false;
        std::string_view a = s.substr(6, close1 - 6);
        std::string_view b = s.substr(close1 + 2, s.size() - 1 - (close1 + 2));
        return parse_plain_int(a, num) && parse_plain_int(b, den);
    }
    size_t slash = s.find('/');
    if (slash == std::string_view::npos || s.find('/', slash + 1) != std::string_view::npos) return false;
    return parse_plain_int(s.substr(0, slash), num) && parse_plain_int(s.substr(slash + 1), den);
}

} // namespace detail

// Canonical answer form: trim -> strip one $...$ layer -> reduce integer
// rationals (sign on the numerator, denominator 1 collapses to an integer) ->
// canonicalize integer-valued numerals ("5.0", "+5", "007" -> "5"). Anything
// else is compared verbatim; notably fractions and decimals never cross-match.
inline std::string normalize_answer(std::string_view raw) {
    std::string_view s = trim(raw);
    if (s.size() >= 2 && s.front() == '$' && s.back() == '$') s = trim(s.substr(1, s.size() - 2));

    long long num = 0, den = 0;
    if (detail::parse_rational(s, num, den) && den != 0) {
        if (den < 0) {
            num = -num;
            den = -den;
        }
        long long g = std::gcd(num < 0 ? -num : num, den);
        if (g > 0) {
            num /= g;
            den /= g;
        }
        if (den == 1) return detail::canon_int(num);
        return detail::canon_int(num) + "/" + std::to_string(den);
    }

    long long v = 0;
    if (detail::parse_plain_int(s, v)) return detail::canon_int(v);

    // integer-valued decimal: [+-]?digits '.' zeros*
    size_t dot = s.find('.');
    if (dot != std::string_view::npos && s.find('.', dot + 1) == std::string_view::npos) {
        std::string_view head = s.substr(0, dot), tail = s.substr(dot + 1);
        bool tail_zeros = true;
        for (char c : tail)
            if (c != '0') tail_zeros = false;
        if (tail_zeros && detail::parse_plain_int(head, v)) return detail::canon_int(v);
    }
    return std::string(s);
}

inline bool answers_match(std::string_view a, std::string_view b) {
    return normalize_answer(a) == normalize_answer(b);
}

// Convenience used by eval and reward paths.
inline bool output_answer_correct(std::string_view model_output, std::string_view gold_answer) {
    auto a = try_extract_boxed_answer(model_output);
    return a.has_value() && answers_match(*a, gold_answer);
}

} // namespace sst
