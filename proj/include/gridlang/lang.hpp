#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <string>
#include <vector>

#include "gridlang/common.hpp"

namespace gridlang::lang {

// ---------------------------------------------------------------------------
// Domain types

enum class Referent : int { Red = 0, Blue = 1, Green = 2 };
enum class Connector : int { Comma = 0, ButFirst = 1, ButBefore = 2 };
enum class Subset : int { Comma = 0, CommaButFirst = 1, CommaButBefore = 2 };

constexpr int kNumReferents = 3;
constexpr int kMaxSubgoals = 6;

using ExecutionPlan = std::vector<Referent>;

inline const char* referent_name(Referent r) {
    switch (r) {
        case Referent::Red: return "red";
        case Referent::Blue: return "blue";
        case Referent::Green: return "green";
    }
    throw Error("referent_name: bad referent");
}

inline const char* connector_name(Connector c) {
    switch (c) {
        case Connector::Comma: return "comma";
        case Connector::ButFirst: return "but first";
        case Connector::ButBefore: return "but before";
    }
    throw Error("connector_name: bad connector");
}

inline const char* subset_name(Subset s) {
    switch (s) {
        case Subset::Comma: return "comma";
        case Subset::CommaButFirst: return "comma-butfirst";
        case Subset::CommaButBefore: return "comma-butbefore";
    }
    throw Error("subset_name: bad subset");
}

inline Subset parse_subset(std::string name) {
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (name == "comma") return Subset::Comma;
    if (name == "comma-butfirst" || name == "butfirst") return Subset::CommaButFirst;
    if (name == "comma-butbefore" || name == "butbefore") return Subset::CommaButBefore;
    throw ConfigError("unknown language subset: " + name);
}

// Canonical surface form: "Go to the <color>" clauses joined by ", ",
// ", but first ", ", but before ".
inline std::string render(const std::vector<Referent>& subgoals,
                          const std::vector<Connector>& connectors) {
    if (subgoals.empty()) throw MalformedClauseError("render: no sub-goals");
    if (connectors.size() + 1 != subgoals.size())
        throw MalformedClauseError("render: connector count must be sub-goals - 1");
    std::string text = "Go to the ";
    text += referent_name(subgoals[0]);
    for (size_t i = 0; i < connectors.size(); ++i) {
        switch (connectors[i]) {
            case Connector::Comma: text += ", "; break;
            case Connector::ButFirst: text += ", but first "; break;
            case Connector::ButBefore: text += ", but before "; break;
        }
        text += "go to the ";
        text += referent_name(subgoals[i + 1]);
    }
    return text;
}

struct Instruction {
    std::vector<Referent> subgoals;   // surface order
    std::vector<Connector> connectors; // between consecutive sub-goals
    std::string text;                  // canonical surface string

    friend bool operator==(const Instruction& a, const Instruction& b) {
        return a.subgoals == b.subgoals && a.connectors == b.connectors;
    }
};

inline Instruction make_instruction(std::vector<Referent> subgoals,
                                    std::vector<Connector> connectors) {
    Instruction instr;
    instr.text = render(subgoals, connectors);
    instr.subgoals = std::move(subgoals);
    instr.connectors = std::move(connectors);
    return instr;
}

// ---------------------------------------------------------------------------
// Tokenization
//
// Vocabulary ids are fixed; the instruction encoder depends on this order.

inline const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> vocab = {
        "go", "to", "the", "red", "blue", "green", ",", "but", "first", "before"};
    return vocab;
}

inline int token_id(const std::string& token) {
    const auto& vocab = vocabulary();
    for (size_t i = 0; i < vocab.size(); ++i)
        if (vocab[i] == token) return static_cast<int>(i);
    throw UnknownTokenError("unknown token: " + token);
}

namespace detail {

inline std::vector<std::string> split_raw(const std::string& text) {
    std::vector<std::string> tokens;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            tokens.push_back(word);
            word.clear();
        }
    };
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            flush();
        } else if (ch == ',') {
            flush();
            tokens.emplace_back(",");
        } else {
            word += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        }
    }
    flush();
    return tokens;
}

inline Referent referent_from_token(const std::string& token) {
    if (token == "red") return Referent::Red;
    if (token == "blue") return Referent::Blue;
    if (token == "green") return Referent::Green;
    throw MalformedClauseError("expected a color, got: " + token);
}

// Parses the token stream into (subgoals, connectors), throwing
// MalformedClause when the clause grammar is violated.
inline void parse_tokens(const std::vector<std::string>& tokens,
                         std::vector<Referent>& subgoals,
                         std::vector<Connector>& connectors) {
    size_t pos = 0;
    auto expect = [&](const char* want) {
        if (pos >= tokens.size() || tokens[pos] != want)
            throw MalformedClauseError(std::string("expected '") + want + "' in clause");
        ++pos;
    };
    auto clause = [&] {
        expect("go");
        expect("to");
        expect("the");
        if (pos >= tokens.size())
            throw MalformedClauseError("clause missing its color");
        subgoals.push_back(referent_from_token(tokens[pos++]));
    };

    clause();
    while (pos < tokens.size()) {
        expect(",");
        if (pos < tokens.size() && tokens[pos] == "but") {
            ++pos;
            if (pos >= tokens.size())
                throw MalformedClauseError("dangling 'but'");
            if (tokens[pos] == "first") {
                connectors.push_back(Connector::ButFirst);
            } else if (tokens[pos] == "before") {
                connectors.push_back(Connector::ButBefore);
            } else {
                throw MalformedClauseError("expected 'first' or 'before' after 'but'");
            }
            ++pos;
        } else {
            connectors.push_back(Connector::Comma);
        }
        clause();
    }
}

} // namespace detail

// Lowercased tokens; "," is its own token. Throws UnknownToken for words
// outside the vocabulary and MalformedClause when the clause structure is
// broken.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens = detail::split_raw(text);
    if (tokens.empty()) throw MalformedClauseError("empty instruction text");
    for (const auto& token : tokens) token_id(token); // UnknownToken check first
    std::vector<Referent> subgoals;
    std::vector<Connector> connectors;
    detail::parse_tokens(tokens, subgoals, connectors);
    return tokens;
}

inline Instruction parse_instruction(const std::string& text) {
    std::vector<std::string> tokens = detail::split_raw(text);
    if (tokens.empty()) throw MalformedClauseError("empty instruction text");
    for (const auto& token : tokens) token_id(token);
    std::vector<Referent> subgoals;
    std::vector<Connector> connectors;
    detail::parse_tokens(tokens, subgoals, connectors);
    return make_instruction(std::move(subgoals), std::move(connectors));
}

inline std::vector<int> token_ids(const Instruction& instr) {
    std::vector<int> ids;
    for (const auto& token : tokenize(instr.text)) ids.push_back(token_id(token));
    return ids;
}

// ---------------------------------------------------------------------------
// Connector semantics

// Connector-sequence acceptance: any number of commas, optionally ended by
// exactly one ButFirst or ButBefore. Non-linear connectors may only appear
// in final position.
inline bool connectors_accepted(const std::vector<Connector>& connectors) {
    for (size_t i = 0; i < connectors.size(); ++i) {
        if (connectors[i] == Connector::Comma) continue;
        if (i + 1 != connectors.size()) return false;
    }
    return true;
}

inline bool has_consecutive_repeat(const ExecutionPlan& plan) {
    for (size_t i = 1; i < plan.size(); ++i)
        if (plan[i] == plan[i - 1]) return true;
    return false;
}

// Execution order for a structurally valid instruction:
//   all-comma          -> surface order
//   trailing ButFirst  -> last surface sub-goal moves to the front
//   trailing ButBefore -> last surface sub-goal is inserted immediately
//                         before the second-to-last one
inline ExecutionPlan resolve_plan(const Instruction& instr) {
    if (instr.subgoals.empty())
        throw MalformedClauseError("resolve_plan: no sub-goals");
    if (!connectors_accepted(instr.connectors))
        throw MalformedClauseError("resolve_plan: non-linear connector not in final position");
    ExecutionPlan plan = instr.subgoals;
    if (!instr.connectors.empty()) {
        const size_t n = plan.size();
        switch (instr.connectors.back()) {
            case Connector::Comma:
                break;
            case Connector::ButFirst: {
                Referent last = plan[n - 1];
                plan.erase(plan.begin() + static_cast<long>(n - 1));
                plan.insert(plan.begin(), last);
                break;
            }
            case Connector::ButBefore: {
                Referent last = plan[n - 1];
                plan.erase(plan.begin() + static_cast<long>(n - 1));
                plan.insert(plan.end() - 1, last);
                break;
            }
        }
    }
    return plan;
}

// True iff the connector sequence is accepted, the sub-goal count is in
// [1, 6], and the resolved plan never visits the same referent twice in a
// row.
inline bool validate(const Instruction& instr) {
    const size_t n = instr.subgoals.size();
    if (n < 1 || n > kMaxSubgoals) return false;
    if (instr.connectors.size() + 1 != n) return false;
    if (!connectors_accepted(instr.connectors)) return false;
    return !has_consecutive_repeat(resolve_plan(instr));
}

// ---------------------------------------------------------------------------
// Subsets and enumeration

inline std::vector<Connector> allowed_connectors(Subset subset) {
    switch (subset) {
        case Subset::Comma: return {Connector::Comma};
        case Subset::CommaButFirst: return {Connector::Comma, Connector::ButFirst};
        case Subset::CommaButBefore: return {Connector::Comma, Connector::ButBefore};
    }
    throw Error("allowed_connectors: bad subset");
}

inline bool has_connector(const Instruction& instr, Connector c) {
    return std::find(instr.connectors.begin(), instr.connectors.end(), c) !=
           instr.connectors.end();
}

// Comma-only instructions belong to all three subsets; a non-linear
// connector pins the instruction to the one subset that allows it.
inline std::vector<Subset> subset_membership(const Instruction& instr) {
    if (has_connector(instr, Connector::ButFirst)) return {Subset::CommaButFirst};
    if (has_connector(instr, Connector::ButBefore)) return {Subset::CommaButBefore};
    return {Subset::Comma, Subset::CommaButFirst, Subset::CommaButBefore};
}

// Deterministic enumeration: by sub-goal count, then referent tuple under
// Red < Blue < Green, then connector profile with comma-only first.
inline std::vector<Instruction> enumerate_instructions(Subset subset, int min_subgoals,
                                                       int max_subgoals) {
    if (min_subgoals < 1 || min_subgoals > max_subgoals || max_subgoals > kMaxSubgoals)
        throw Error("enumerate_instructions: sub-goal range must satisfy 1 <= min <= max <= 6");

    std::vector<Instruction> out;
    for (int n = min_subgoals; n <= max_subgoals; ++n) {
        std::vector<Referent> tuple(static_cast<size_t>(n), Referent::Red);
        const long total = static_cast<long>(std::pow(kNumReferents, n));
        for (long code = 0; code < total; ++code) {
            long rest = code;
            for (int i = n - 1; i >= 0; --i) {
                tuple[static_cast<size_t>(i)] = static_cast<Referent>(rest % kNumReferents);
                rest /= kNumReferents;
            }
            std::vector<std::vector<Connector>> profiles;
            profiles.emplace_back(static_cast<size_t>(n - 1), Connector::Comma);
            if (n >= 2 && subset != Subset::Comma) {
                std::vector<Connector> tail(static_cast<size_t>(n - 1), Connector::Comma);
                tail.back() = subset == Subset::CommaButFirst ? Connector::ButFirst
                                                              : Connector::ButBefore;
                profiles.push_back(std::move(tail));
            }
            for (auto& profile : profiles) {
                Instruction instr = make_instruction(tuple, profile);
                if (validate(instr)) out.push_back(std::move(instr));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Train/test split

struct SplitSpec {
    double proportion = 0.9;      // in {0.1, ..., 0.9}
    uint64_t seed = 1;
    int train_max_subgoals = 3;
    int total_max_subgoals = kMaxSubgoals;
};

struct Split {
    std::vector<Instruction> train;
    std::vector<Instruction> test;
};

// Training candidates are all 1..3 sub-goal instructions; round(p * N)
// (half-up) of them are sampled without replacement with the given seed.
// The test set is every 4..6 sub-goal instruction.
inline Split split_train_test(Subset subset, const SplitSpec& spec) {
    const double tenths = spec.proportion * 10.0;
    if (std::abs(tenths - std::round(tenths)) > 1e-9 || tenths < 1.0 - 1e-9 ||
        tenths > 9.0 + 1e-9)
        throw ConfigError("split proportion must be one of 0.1 .. 0.9");

    std::vector<Instruction> pool =
        enumerate_instructions(subset, 1, spec.train_max_subgoals);
    const auto want =
        static_cast<size_t>(std::floor(spec.proportion * static_cast<double>(pool.size()) + 0.5));
    if (want == 0) throw EmptyTrainError("train split rounds to zero instructions");

    std::vector<size_t> indices(pool.size());
    for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    // Independent sample per proportion: the stream mixes in the decile so
    // the 0.2 sample is not a superset of the 0.1 sample.
    Rng rng(mix_seed(spec.seed, 0x5417 + static_cast<uint64_t>(std::llround(tenths))));
    for (size_t i = 0; i < want; ++i) {
        const size_t j = i + rng.uniform_int(indices.size() - i);
        std::swap(indices[i], indices[j]);
    }
    indices.resize(want);
    std::sort(indices.begin(), indices.end()); // keep enumeration order

    Split split;
    split.train.reserve(want);
    for (size_t idx : indices) split.train.push_back(pool[idx]);
    split.test = enumerate_instructions(subset, spec.train_max_subgoals + 1,
                                        spec.total_max_subgoals);
    return split;
}

} // namespace gridlang::lang
