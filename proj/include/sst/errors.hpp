#pragma once
// Error taxonomy shared by all modules. Every documented failure mode maps to
// one Errc value so callers (and tests) can match on the code, not the text.

#include <stdexcept>
#include <string>

namespace sst {

enum class Errc {
    // markup
    unbalanced_tag,
    nested_chain,
    multiple_boxed,
    no_boxed_answer,
    delimiter_in_content,
    // vocab / tokenizer
    empty_corpus,
    out_of_vocab,
    sequence_too_long,
    span_out_of_range,
    // task generation
    unknown_family,
    bad_difficulty,
    // model / training
    shape_mismatch,
    length_mismatch,
    step_out_of_range,
    non_finite_loss,
    non_finite_ratio,
    empty_dataset,
    example_too_long,
    empty_group,
    // mining / cold start / injection
    empty_pool,
    empty_chain,
    // eval
    empty_benchmark,
    mismatched_benchmarks,
    // config / manifest / io
    config_parse,
    schema_mismatch,
    missing_key,
    missing_input,
    io_failure,
    checksum_mismatch,
    version_mismatch,
};

inline const char* errc_name(Errc c) {
    switch (c) {
    case Errc::unbalanced_tag: return "unbalanced_tag";
    case Errc::nested_chain: return "nested_chain";
    case Errc::multiple_boxed: return "multiple_boxed";
    case Errc::no_boxed_answer: return "no_boxed_answer";
    case Errc::delimiter_in_content: return "delimiter_in_content";
    case Errc::empty_corpus: return "empty_corpus";
    case Errc::out_of_vocab: return "out_of_vocab";
    case Errc::sequence_too_long: return "sequence_too_long";
    case Errc::span_out_of_range: return "span_out_of_range";
    case Errc::unknown_family: return "unknown_family";
    case Errc::bad_difficulty: return "bad_difficulty";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::length_mismatch: return "length_mismatch";
    case Errc::step_out_of_range: return "step_out_of_range";
    case Errc::non_finite_loss: return "non_finite_loss";
    case Errc::non_finite_ratio: return "non_finite_ratio";
    case Errc::empty_dataset: return "empty_dataset";
    case Errc::example_too_long: return "example_too_long";
    case Errc::empty_group: return "empty_group";
    case Errc::empty_pool: return "empty_pool";
    case Errc::empty_chain: return "empty_chain";
    case Errc::empty_benchmark: return "empty_benchmark";
    case Errc::mismatched_benchmarks: return "mismatched_benchmarks";
    case Errc::config_parse: return "config_parse";
    case Errc::schema_mismatch: return "schema_mismatch";
    case Errc::missing_key: return "missing_key";
    case Errc::missing_input: return "missing_input";
    case Errc::io_failure: return "io_failure";
    case Errc::checksum_mismatch: return "checksum_mismatch";
    case Errc::version_mismatch: return "version_mismatch";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void expect(bool ok, Errc code, const std::string& what) {
    if (!ok) fail(code, what);
}

} // namespace sst
