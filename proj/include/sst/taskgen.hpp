#pragma once
// Synthetic difficulty-graded task families with exact closed-form oracles.
// A task's gold_chain is an abstract, number-free plan ("step → step → …");
// variants of a parent task reuse that chain verbatim and only resample
// operands, which is what lets degraded (easier) siblings share a template.
// Difficulty is purely structural: chain step count, max operand digits in the
// statement, and composition depth derived from the chain itself.

#include <array>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sst/errors.hpp"
#include "sst/hash.hpp"
#include "sst/rng.hpp"
#include "sst/strutil.hpp"

namespace sst {

enum class TaskFamily { chained_arithmetic, linear_system, geometry_steps };

inline const char* family_name(TaskFamily f) {
    switch (f) {
    case TaskFamily::chained_arithmetic: return "chained_arithmetic";
    case TaskFamily::linear_system: return "linear_system";
    case TaskFamily::geometry_steps: return "geometry_steps";
    }
    return "?";
}

inline TaskFamily family_from_name(std::string_view s) {
    if (s == "chained_arithmetic") return TaskFamily::chained_arithmetic;
    if (s == "linear_system") return TaskFamily::linear_system;
    if (s == "geometry_steps") return TaskFamily::geometry_steps;
    fail(Errc::unknown_family, "no task family named '" + std::string(s) + "'");
}

struct TaskInstance {
    std::string id;
    std::string statement;
    std::string gold_chain; // "step → step → …", no concrete numbers
    std::string gold_steps; // worked solution, one arithmetic act per line
    std::string gold_answer;
    int difficulty = 1;
    TaskFamily family = TaskFamily::chained_arithmetic;
    std::string parent_id; // empty for root tasks
};

struct IntRange {
    int lo = 0, hi = 0;
};

struct DifficultyProfile {
    int level;
    IntRange step_count_range;
    IntRange operand_digit_range;
    int composition_depth; // minimum number of nested sub-procedures
};

// Each level weakly dominates the previous in all three dimensions and
// strictly in step count; scoring tests features against the lo thresholds.
inline const std::array<DifficultyProfile, 5>& difficulty_profiles() {
    static const std::array<DifficultyProfile, 5> kProfiles = {{
        {1, {1, 2}, {1, 1}, 0},
        {2, {3, 4}, {1, 2}, 0},
        {3, {5, 6}, {2, 2}, 1},
        {4, {7, 8}, {3, 3}, 1},
        {5, {9, 11}, {3, 4}, 2},
    }};
    return kProfiles;
}

constexpr std::string_view kChainSep = " → ";

inline std::vector<std::string> split_chain(std::string_view chain) {
    std::vector<std::string> steps;
    size_t start = 0;
    while (start <= chain.size()) {
        size_t pos = chain.find(kChainSep, start);
        std::string_view part =
            pos == std::string_view::npos ? chain.substr(start) : chain.substr(start, pos - start);
        if (!part.empty()) steps.emplace_back(part);
        if (pos == std::string_view::npos) break;
        start = pos + kChainSep.size();
    }
    return steps;
}

inline std::string join_chain(const std::vector<std::string>& steps) {
    std::string out;
    for (size_t i = 0; i < steps.size(); ++i) {
        if (i) out += kChainSep;
        out += steps[i];
    }
    return out;
}

inline int chain_step_count(std::string_view chain) {
    return static_cast<int>(split_chain(chain).size());
}

// longest run of consecutive digits anywhere in the statement
inline int max_statement_digits(std::string_view statement) {
    int best = 0, run = 0;
    for (char c : statement) {
        if (c >= '0' && c <= '9') best = std::max(best, ++run);
        else run = 0;
    }
    return best;
}

// --- chain phrase constants ---------------------------------------------------

namespace phrase {
// chained arithmetic
constexpr std::string_view add = "Add the amount";
constexpr std::string_view sub = "Subtract the amount";
constexpr std::string_view mul = "Multiply by the factor";
// linear systems
constexpr std::string_view eval_rhs = "Evaluate the right side";
constexpr std::string_view sub_offset = "Subtract the offset";
constexpr std::string_view div_factor = "Divide by the factor";
constexpr std::string_view add_eqs = "Add the equations";
constexpr std::string_view substitute = "Substitute into the first equation";
constexpr std::string_view sub_second = "Subtract the second equation from the first";
constexpr std::string_view combine = "Combine into the requested value";
constexpr std::string_view weight = "Weight the unknowns";
constexpr std::string_view sum_pieces = "Sum the pieces";
// geometry
constexpr std::string_view square_legs = "Square each leg";
constexpr std::string_view sum_squares = "Sum the squares";
constexpr std::string_view sqrt_step = "Take the square root";
constexpr std::string_view square_hyp = "Square the hypotenuse";
constexpr std::string_view square_known = "Square the known leg";
constexpr std::string_view sub_squares = "Subtract the squares";
constexpr std::string_view next_tri = "Move to the next triangle";
constexpr std::string_view mul_legs = "Multiply the legs";
constexpr std::string_view halve = "Halve the product";
constexpr std::string_view perim = "Add the three sides";
constexpr std::string_view scale_step = "Multiply by the scale factor";

inline std::string find_helper(char name) { return std::string("Find ") + name; }
inline std::string use_helper(bool add_it, char name) {
    return std::string(add_it ? "Add helper " : "Subtract helper ") + name;
}
} // namespace phrase

// composition depth is recoverable from the chain: helper definitions, system
// eliminations, nested unwrap layers beyond the first, and geometry stages all
// count as one nested sub-procedure each
inline int composition_depth_of(TaskFamily family, const std::vector<std::string>& steps) {
    auto count = [&](std::string_view needle) {
        int n = 0;
        for (const auto& s : steps)
            if (s == needle) ++n;
        return n;
    };
    int finds = 0;
    for (const auto& s : steps)
        if (s.starts_with("Find ")) ++finds;
    switch (family) {
    case TaskFamily::chained_arithmetic: return finds;
    case TaskFamily::linear_system: {
        int depth = finds;
        depth += count(phrase::add_eqs);    // two-unknown elimination
        depth += count(phrase::sub_second); // third unknown peeled first
        int offsets = count(phrase::sub_offset);
        if (offsets > 1) depth += offsets - 1; // nested single-unknown layers
        return depth;
    }
    case TaskFamily::geometry_steps:
        return count(phrase::next_tri) + count(phrase::mul_legs) + count(phrase::perim) +
               count(phrase::scale_step);
    }
    return 0;
}

inline int score_difficulty_from(int steps, int digits, int depth) {
    const auto& ps = difficulty_profiles();
    for (int i = 4; i >= 0; --i) {
        const auto& p = ps[static_cast<size_t>(i)];
        if (steps >= p.step_count_range.lo && digits >= p.operand_digit_range.lo &&
            depth >= p.composition_depth)
            return p.level;
    }
    return 1;
}

inline int score_difficulty(const TaskInstance& t) {
    auto steps = split_chain(t.gold_chain);
    return score_difficulty_from(static_cast<int>(steps.size()), max_statement_digits(t.statement),
                                 composition_depth_of(t.family, steps));
}

// --- family blueprints ----------------------------------------------------------
// A blueprint is the number-free structure of a task; it maps 1:1 to a gold
// chain, so variants recover it from the parent's chain string.

namespace detail {

inline long long rand_digits(Rng& rng, int digits) {
    long long lo = 1, hi = 9;
    for (int i = 1; i < digits; ++i) {
        lo *= 10;
        hi = hi * 10 + 9;
    }
    return rng.uniform_int(lo, hi);
}

inline int digit_count(long long v) {
    if (v < 0) v = -v;
    int n = 1;
    while (v >= 10) {
        v /= 10;
        ++n;
    }
    return n;
}

// ..................................................................... arithmetic

struct ArithOp {
    enum Kind { add, sub, mul, use_add, use_sub } kind;
    int helper = -1; // index into helper names for use_*
};

struct ArithPlan {
    int helpers = 0;
    std::vector<ArithOp> ops;
    static constexpr char names[2] = {'A', 'B'};
};

inline ArithPlan arith_plan_for_level(int level, Rng& rng) {
    ArithPlan p;
    int n = static_cast<int>(rng.uniform_int(difficulty_profiles()[static_cast<size_t>(level - 1)].step_count_range.lo,
                                             difficulty_profiles()[static_cast<size_t>(level - 1)].step_count_range.hi));
    p.helpers = level <= 2 ? 0 : (level <= 4 ? 1 : 2);
    int main_ops = n - p.helpers;
    int muls = 0;
    for (int i = 0; i < main_ops; ++i) {
        double u = rng.uniform01();
        if (u < 0.25 && muls < 3) {
            p.ops.push_back({ArithOp::mul, -1});
            ++muls;
        } else {
            p.ops.push_back({u < 0.625 ? ArithOp::add : ArithOp::sub, -1});
        }
    }
    // one op per helper becomes a helper use, at distinct positions
    std::vector<size_t> idx(p.ops.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    for (int h = 0; h < p.helpers; ++h) {
        ArithOp& op = p.ops[idx[static_cast<size_t>(h)]];
        op.kind = rng.uniform01() < 0.5 ? ArithOp::use_add : ArithOp::use_sub;
        op.helper = h;
    }
    return p;
}

inline std::optional<ArithPlan> arith_plan_from_chain(const std::vector<std::string>& steps) {
    ArithPlan p;
    for (const auto& s : steps) {
        if (s.starts_with("Find ")) {
            ++p.helpers;
            continue;
        }
        if (s == phrase::add) p.ops.push_back({ArithOp::add, -1});
        else if (s == phrase::sub) p.ops.push_back({ArithOp::sub, -1});
        else if (s == phrase::mul) p.ops.push_back({ArithOp::mul, -1});
        else if (s.starts_with("Add helper ") || s.starts_with("Subtract helper ")) {
            bool adding = s.starts_with("Add");
            char name = s.back();
            int h = name - 'A';
            if (h < 0 || h >= 2) return std::nullopt;
            p.ops.push_back({adding ? ArithOp::use_add : ArithOp::use_sub, h});
        } else {
            return std::nullopt;
        }
    }
    for (const auto& op : p.ops)
        if (op.helper >= p.helpers) return std::nullopt;
    return p;
}

inline void realize_arith(const ArithPlan& plan, int digits, Rng& rng, TaskInstance& out) {
    std::string statement, steps;
    std::vector<std::string> chain;
    long long helper_val[2] = {0, 0};
    for (int h = 0; h < plan.helpers; ++h) {
        long long a = rand_digits(rng, digits), b = rand_digits(rng, digits);
        helper_val[h] = a + b;
        char name = ArithPlan::names[h];
        statement += std::string("Let ") + name + " = " + std::to_string(a) + " + " +
                     std::to_string(b) + ". ";
        steps += std::string(1, name) + " = " + std::to_string(a) + " + " + std::to_string(b) +
                 " = " + std::to_string(helper_val[h]) + "\n";
        chain.push_back(phrase::find_helper(name));
    }
    long long acc = rand_digits(rng, digits);
    statement += "Start with " + std::to_string(acc) + ". ";
    steps += "start: " + std::to_string(acc) + "\n";
    for (const auto& op : plan.ops) {
        long long operand = 0;
        char sym = '+';
        switch (op.kind) {
        case ArithOp::add:
            operand = rand_digits(rng, digits);
            statement += "Add " + std::to_string(operand) + ". ";
            chain.emplace_back(phrase::add);
            sym = '+';
            break;
        case ArithOp::sub:
            operand = rand_digits(rng, digits);
            statement += "Subtract " + std::to_string(operand) + ". ";
            chain.emplace_back(phrase::sub);
            sym = '-';
            break;
        case ArithOp::mul:
            operand = rng.uniform_int(2, 4);
            statement += "Multiply by " + std::to_string(operand) + ". ";
            chain.emplace_back(phrase::mul);
            sym = '*';
            break;
        case ArithOp::use_add:
        case ArithOp::use_sub: {
            char name = ArithPlan::names[op.helper];
            bool adding = op.kind == ArithOp::use_add;
            operand = helper_val[op.helper];
            statement += std::string(adding ? "Add " : "Subtract ") + name + ". ";
            chain.push_back(phrase::use_helper(adding, name));
            sym = adding ? '+' : '-';
            break;
        }
        }
        long long next = sym == '+' ? acc + operand : (sym == '-' ? acc - operand : acc * operand);
        steps += std::to_string(acc) + " " + sym + " " + std::to_string(operand) + " = " +
                 std::to_string(next) + "\n";
        acc = next;
    }
    statement += "What is the result?";
    out.statement = statement;
    out.gold_chain = join_chain(chain);
    out.gold_steps = steps;
    out.gold_answer = std::to_string(acc);
}

// ................................................................. linear systems

struct LinsysPlan {
    int unknowns = 1;     // 1..3
    int helpers = 0;      // 0..2, RHS of the first equation becomes "P [+ Q] + r"
    int layers = 1;       // nesting depth for unknowns == 1
    bool inner_unit = false; // innermost coefficient is 1 (skips one divide step)
    int combo_steps = 0;  // 0 = ask an unknown; 1 or 2 = ask a weighted combo q
    static constexpr char names[2] = {'P', 'Q'};
};

inline LinsysPlan linsys_plan_for_level(int level, Rng& rng) {
    LinsysPlan p;
    switch (level) {
    case 1:
        p.unknowns = 1;
        p.layers = 1;
        p.inner_unit = rng.uniform01() < 0.5;
        break;
    case 2:
        if (rng.uniform01() < 0.5) {
            p.unknowns = 1;
            p.layers = 2;
            p.inner_unit = rng.uniform01() < 0.5;
        } else {
            p.unknowns = 2;
            p.combo_steps = rng.uniform01() < 0.5 ? 1 : 0;
        }
        break;
    case 3:
        p.unknowns = 2;
        p.helpers = 1;
        p.combo_steps = rng.uniform01() < 0.5 ? 1 : 0;
        break;
    case 4:
        p.unknowns = 3;
        p.helpers = rng.uniform01() < 0.5 ? 1 : 2;
        p.combo_steps = 1;
        break;
    default:
        if (rng.uniform01() < 0.5) {
            p.unknowns = 3;
            p.helpers = 2;
            p.combo_steps = 2;
        } else {
            p.unknowns = 1;
            p.helpers = 2;
            p.layers = 4;
            p.inner_unit = rng.uniform01() < 0.5;
        }
        break;
    }
    return p;
}

inline std::vector<std::string> linsys_chain(const LinsysPlan& p) {
    std::vector<std::string> chain;
    for (int h = 0; h < p.helpers; ++h) chain.push_back(phrase::find_helper(LinsysPlan::names[h]));
    if (p.helpers > 0) chain.emplace_back(phrase::eval_rhs);
    if (p.unknowns == 1) {
        for (int l = 0; l < p.layers; ++l) {
            chain.emplace_back(phrase::sub_offset);
            bool innermost = l == p.layers - 1;
            if (!(innermost && p.inner_unit)) chain.emplace_back(phrase::div_factor);
        }
    } else {
        if (p.unknowns == 3) chain.emplace_back(phrase::sub_second);
        chain.emplace_back(phrase::add_eqs);
        chain.emplace_back(phrase::div_factor);
        chain.emplace_back(phrase::substitute);
    }
    if (p.combo_steps == 1) chain.emplace_back(phrase::combine);
    if (p.combo_steps == 2) {
        chain.emplace_back(phrase::weight);
        chain.emplace_back(phrase::sum_pieces);
    }
    return chain;
}

inline std::optional<LinsysPlan> linsys_plan_from_chain(const std::vector<std::string>& steps) {
    LinsysPlan p;
    p.layers = 0;
    int divides = 0;
    bool add_eqs = false, sub_second = false;
    for (const auto& s : steps) {
        if (s.starts_with("Find ")) ++p.helpers;
        else if (s == phrase::sub_offset) ++p.layers;
        else if (s == phrase::div_factor) ++divides;
        else if (s == phrase::add_eqs) add_eqs = true;
        else if (s == phrase::sub_second) sub_second = true;
        else if (s == phrase::combine) p.combo_steps = 1;
        else if (s == phrase::weight) p.combo_steps = 2;
        else if (s == phrase::eval_rhs || s == phrase::substitute || s == phrase::sum_pieces) continue;
        else return std::nullopt;
    }
    if (sub_second) p.unknowns = 3;
    else if (add_eqs) p.unknowns = 2;
    else p.unknowns = 1;
    if (p.unknowns == 1) {
        if (p.layers == 0) return std::nullopt;
        p.inner_unit = divides == p.layers - 1;
    } else {
        p.layers = 1;
    }
    return p;
}

// splits total into `parts` addends, each within [lo, hi]; empty on failure
inline std::vector<long long> split_into_operands(long long total, int parts, Rng& rng, long long lo,
                                                  long long hi) {
    std::vector<long long> out;
    long long rest = total;
    for (int i = parts - 1; i >= 1; --i) {
        long long vlo = std::max(lo, rest - i * hi), vhi = std::min(hi, rest - i * lo);
        if (vlo > vhi) return {};
        long long v = rng.uniform_int(vlo, vhi);
        out.push_back(v);
        rest -= v;
    }
    if (rest < lo || rest > hi) return {};
    out.push_back(rest);
    return out;
}

struct LinsysRhs {
    // first-equation right side rendered as "P + Q + r" with helper definitions
    std::string rendered;
    std::string helper_statements, helper_steps, eval_step;
    bool ok = false;
};

// Express rhs_value as helper names plus a residual, all operands at exactly
// `digits` digits, so no literal in the statement leaks a bigger number.
inline LinsysRhs linsys_build_rhs(long long rhs_value, int helpers, int digits, Rng& rng) {
    LinsysRhs out;
    if (helpers == 0) {
        out.rendered = std::to_string(rhs_value);
        out.ok = true;
        return out;
    }
    long long lo = 1, hi = 9;
    for (int i = 1; i < digits; ++i) {
        lo *= 10;
        hi = hi * 10 + 9;
    }
    for (int attempt = 0; attempt < 64 && !out.ok; ++attempt) {
        // residual r and helper values P (= two addends each) must cover rhs_value
        long long rlo = std::max(lo, rhs_value - 2 * hi * helpers);
        long long rhi = std::min(hi, rhs_value - 2 * lo * helpers);
        if (rlo > rhi) return out;
        long long r = rng.uniform_int(rlo, rhi);
        auto helper_vals = split_into_operands(rhs_value - r, helpers, rng, 2 * lo, 2 * hi);
        if (helper_vals.empty()) continue;
        std::string rendered, statements, steps, eval = "RHS: ";
        bool all_ok = true;
        for (int h = 0; h < helpers; ++h) {
            long long hv = helper_vals[static_cast<size_t>(h)];
            auto parts = split_into_operands(hv, 2, rng, lo, hi);
            if (parts.empty()) {
                all_ok = false;
                break;
            }
            char name = LinsysPlan::names[h];
            statements += std::string("Let ") + name + " = " + std::to_string(parts[0]) + " + " +
                          std::to_string(parts[1]) + ". ";
            steps += std::string(1, name) + " = " + std::to_string(parts[0]) + " + " +
                     std::to_string(parts[1]) + " = " + std::to_string(hv) + "\n";
            rendered += std::string(1, name) + " + ";
            eval += std::to_string(hv) + " + ";
        }
        if (!all_ok) continue;
        rendered += std::to_string(r);
        eval += std::to_string(r) + " = " + std::to_string(rhs_value) + "\n";
        out.rendered = rendered;
        out.helper_statements = statements;
        out.helper_steps = steps;
        out.eval_step = eval;
        out.ok = true;
    }
    return out;
}

inline void realize_linsys(const LinsysPlan& plan, int digits, Rng& rng, TaskInstance& out) {
    expect(plan.combo_steps == 0 || plan.unknowns > 1, Errc::bad_difficulty,
           "combo questions require a system");
    long long lo = 1, hi = 9;
    for (int i = 1; i < digits; ++i) {
        lo *= 10;
        hi = hi * 10 + 9;
    }
    for (int attempt = 0;; ++attempt) {
        expect(attempt < 2048, Errc::bad_difficulty, "linear_system realization did not converge");
        std::string statement, steps, question;
        long long answer = 0;
        if (plan.unknowns == 1) {
            bool deep = plan.layers >= 3;
            long long x = rng.uniform_int(2, deep ? 6 : 30);
            std::vector<long long> a(static_cast<size_t>(plan.layers)), b(static_cast<size_t>(plan.layers));
            std::string expr;
            long long value = x;
            for (int l = plan.layers - 1; l >= 0; --l) { // build inside-out
                bool innermost = l == plan.layers - 1;
                // deep nests pin coefficients to 2 so the RHS stays within the
                // helper-representable window
                long long ai = innermost && plan.inner_unit ? 1 : (deep ? 2 : rng.uniform_int(2, 4));
                long long bhi = deep ? std::min(hi, lo + std::max<long long>(1, (hi - lo) / 8)) : hi;
                long long bi = rng.uniform_int(lo, bhi);
                a[static_cast<size_t>(l)] = ai;
                b[static_cast<size_t>(l)] = bi;
                if (innermost) {
                    expr = (ai == 1 ? "x" : std::to_string(ai) + "x") + std::string(" + ") +
                           std::to_string(bi);
                } else {
                    expr = std::to_string(ai) + "(" + expr + ") + " + std::to_string(bi);
                }
                value = ai * value + bi;
            }
            LinsysRhs rhs = linsys_build_rhs(value, plan.helpers, digits, rng);
            if (!rhs.ok) continue;
            statement = rhs.helper_statements + "Solve for x: " + expr + " = " + rhs.rendered + ".";
            steps = rhs.helper_steps + rhs.eval_step;
            long long cur = value;
            for (int l = 0; l < plan.layers; ++l) { // unwrap outside-in
                long long bi = b[static_cast<size_t>(l)], ai = a[static_cast<size_t>(l)];
                steps += std::to_string(cur) + " - " + std::to_string(bi) + " = " +
                         std::to_string(cur - bi) + "\n";
                cur -= bi;
                if (ai != 1) {
                    steps += std::to_string(cur) + " / " + std::to_string(ai) + " = " +
                             std::to_string(cur / ai) + "\n";
                    cur /= ai;
                }
            }
            steps += "x = " + std::to_string(cur) + "\n";
            answer = cur;
        } else {
            // keep every displayed value (s, d, t) within the digit budget
            long long ymax = (hi - 1) / 2 - (plan.unknowns == 3 ? lo / 2 : 0);
            if (ymax <= lo) ymax = lo + 1;
            long long y = rng.uniform_int(lo, ymax);
            long long xmax = (plan.unknowns == 3 ? hi - lo : hi) - y;
            if (xmax <= y) continue;
            long long x = rng.uniform_int(y + 1, xmax);
            long long s = x + y, d = x - y;
            long long z = 0, t = s;
            if (plan.unknowns == 3) {
                if (hi - s < lo) continue;
                z = rng.uniform_int(lo, hi - s);
                t = s + z;
            }
            long long first_rhs = plan.unknowns == 3 ? t : s;
            LinsysRhs rhs = linsys_build_rhs(first_rhs, plan.helpers, digits, rng);
            if (!rhs.ok) continue;
            statement = rhs.helper_statements + "Solve the system: ";
            if (plan.unknowns == 3)
                statement += "x + y + z = " + rhs.rendered + ", x + y = " + std::to_string(s) +
                             ", x - y = " + std::to_string(d) + ".";
            else
                statement += "x + y = " + rhs.rendered + ", x - y = " + std::to_string(d) + ".";
            steps = rhs.helper_steps + rhs.eval_step;
            if (plan.unknowns == 3) {
                steps += std::to_string(t) + " - " + std::to_string(s) + " = " + std::to_string(z) +
                         "\n";
                steps += "z = " + std::to_string(z) + "\n";
            }
            steps += std::to_string(s) + " + " + std::to_string(d) + " = " + std::to_string(s + d) +
                     "\n";
            steps += std::to_string(s + d) + " / 2 = " + std::to_string(x) + "\n";
            steps += "x = " + std::to_string(x) + "\n";
            steps += std::to_string(s) + " - " + std::to_string(x) + " = " + std::to_string(y) + "\n";
            steps += "y = " + std::to_string(y) + "\n";
            if (plan.combo_steps == 0) {
                question = " Find y.";
                answer = y;
            } else {
                // q = alpha*u1 + beta*u2 over two distinct unknowns
                const char* names3[] = {"x", "y", "z"};
                long long vals3[] = {x, y, z};
                int limit = plan.unknowns;
                int i1 = static_cast<int>(rng.uniform_int(0, limit - 1));
                int i2 = static_cast<int>(rng.uniform_int(0, limit - 2));
                if (i2 >= i1) ++i2;
                long long alpha = rng.uniform_int(2, 4), beta = rng.uniform_int(2, 4);
                long long m1 = alpha * vals3[i1], m2 = beta * vals3[i2];
                question = std::string(" Then find q = ") + std::to_string(alpha) + names3[i1] +
                           " + " + std::to_string(beta) + names3[i2] + ".";
                steps += std::to_string(alpha) + " * " + std::to_string(vals3[i1]) + " = " +
                         std::to_string(m1) + "\n";
                steps += std::to_string(beta) + " * " + std::to_string(vals3[i2]) + " = " +
                         std::to_string(m2) + "\n";
                steps += std::to_string(m1) + " + " + std::to_string(m2) + " = " +
                         std::to_string(m1 + m2) + "\n";
                steps += "q = " + std::to_string(m1 + m2) + "\n";
                answer = m1 + m2;
            }
            statement += question;
        }
        out.statement = statement;
        out.gold_chain = join_chain(linsys_chain(plan));
        out.gold_steps = steps;
        out.gold_answer = std::to_string(answer);
        return;
    }
}

// ....................................................................... geometry

struct GeomPlan {
    enum Kind { sqrt_only, sum_sqrt, full, leg_find } kind = full;
    int triangles = 1;        // >1 implies kind == full
    bool area = false, perimeter = false, scale = false;
};

inline GeomPlan geom_plan_for_level(int level, Rng& rng) {
    GeomPlan p;
    auto pick = [&](std::initializer_list<GeomPlan> opts) {
        auto it = opts.begin();
        std::advance(it, rng.uniform_int(0, static_cast<int64_t>(opts.size()) - 1));
        return *it;
    };
    switch (level) {
    case 1:
        p.kind = rng.uniform01() < 0.5 ? GeomPlan::sqrt_only : GeomPlan::sum_sqrt;
        return p;
    case 2:
        return pick({{GeomPlan::full, 1, false, false, false},
                     {GeomPlan::full, 1, false, false, true},
                     {GeomPlan::leg_find, 1, false, false, false},
                     {GeomPlan::full, 1, false, true, false}});
    case 3:
        return pick({{GeomPlan::full, 1, true, false, false},
                     {GeomPlan::full, 1, true, false, true},
                     {GeomPlan::full, 1, false, true, true},
                     {GeomPlan::leg_find, 1, true, false, false}});
    case 4:
        return pick({{GeomPlan::full, 2, false, false, false},
                     {GeomPlan::full, 2, false, false, true},
                     {GeomPlan::full, 2, false, true, false}});
    default:
        return pick({{GeomPlan::full, 2, true, false, false},
                     {GeomPlan::full, 2, true, false, true},
                     {GeomPlan::full, 2, false, true, true},
                     {GeomPlan::full, 3, false, false, false}});
    }
}

inline std::vector<std::string> geom_chain(const GeomPlan& p) {
    std::vector<std::string> chain;
    switch (p.kind) {
    case GeomPlan::sqrt_only: chain = {std::string(phrase::sqrt_step)}; break;
    case GeomPlan::sum_sqrt:
        chain = {std::string(phrase::sum_squares), std::string(phrase::sqrt_step)};
        break;
    case GeomPlan::leg_find:
        chain = {std::string(phrase::square_hyp), std::string(phrase::square_known),
                 std::string(phrase::sub_squares), std::string(phrase::sqrt_step)};
        break;
    case GeomPlan::full:
        chain = {std::string(phrase::square_legs), std::string(phrase::sum_squares),
                 std::string(phrase::sqrt_step)};
        for (int t = 1; t < p.triangles; ++t) {
            chain.emplace_back(phrase::next_tri);
            chain.emplace_back(phrase::square_legs);
            chain.emplace_back(phrase::sum_squares);
            chain.emplace_back(phrase::sqrt_step);
        }
        break;
    }
    if (p.area) {
        chain.emplace_back(phrase::mul_legs);
        chain.emplace_back(phrase::halve);
    }
    if (p.perimeter) chain.emplace_back(phrase::perim);
    if (p.scale) chain.emplace_back(phrase::scale_step);
    return chain;
}

inline std::optional<GeomPlan> geom_plan_from_chain(const std::vector<std::string>& steps) {
    GeomPlan p;
    if (steps.empty()) return std::nullopt;
    size_t i = 0;
    if (steps[0] == phrase::sqrt_step) {
        p.kind = GeomPlan::sqrt_only;
        i = 1;
    } else if (steps[0] == phrase::sum_squares) {
        p.kind = GeomPlan::sum_sqrt;
        i = 2;
    } else if (steps[0] == phrase::square_hyp) {
        p.kind = GeomPlan::leg_find;
        i = 4;
    } else if (steps[0] == phrase::square_legs) {
        p.kind = GeomPlan::full;
        i = 3;
        while (i < steps.size() && steps[i] == phrase::next_tri) {
            ++p.triangles;
            i += 4;
        }
    } else {
        return std::nullopt;
    }
    if (i > steps.size()) return std::nullopt;
    while (i < steps.size()) {
        if (steps[i] == phrase::mul_legs && i + 1 < steps.size() && steps[i + 1] == phrase::halve) {
            p.area = true;
            i += 2;
        } else if (steps[i] == phrase::perim) {
            p.perimeter = true;
            ++i;
        } else if (steps[i] == phrase::scale_step) {
            p.scale = true;
            ++i;
        } else {
            return std::nullopt;
        }
    }
    return p;
}

struct Triple {
    long long a, b, c;
};

inline void realize_geom(const GeomPlan& plan, int digits, Rng& rng, TaskInstance& out) {
    static const Triple kBases[] = {{3, 4, 5},   {5, 12, 13}, {8, 15, 17},
                                    {7, 24, 25}, {20, 21, 29}, {9, 40, 41}};
    static const Triple kChain2[] = {{3, 4, 5}, {5, 12, 13}};          // hyp 5k feeds leg 5k
    static const Triple kChain3[] = {{3, 4, 5}, {5, 12, 13}, {13, 84, 85}};

    std::string statement, steps;
    long long result = 0, legA = 0, legB = 0, hyp = 0;

    long long dlo = 1, dhi = 9; // [10^(digits-1), 10^digits - 1]
    for (int i = 1; i < digits; ++i) {
        dlo *= 10;
        dhi = dhi * 10 + 9;
    }
    // scale window that puts `unit * k` at exactly `digits` digits
    auto k_window = [&](long long unit) {
        long long klo = std::max<long long>(1, (dlo + unit - 1) / unit);
        long long khi = dhi / unit;
        return std::pair<long long, long long>(klo, khi);
    };

    if (plan.kind == GeomPlan::sqrt_only || plan.kind == GeomPlan::sum_sqrt) {
        const Triple base = kBases[rng.uniform_int(0, 2)]; // keep level-1 numbers small
        long long k = rng.uniform_int(1, 3);
        legA = base.a * k;
        legB = base.b * k;
        hyp = base.c * k;
        if (plan.kind == GeomPlan::sqrt_only) {
            statement = "The squares of a right triangle's legs sum to " +
                        std::to_string(hyp * hyp) + ".";
            steps = "sqrt(" + std::to_string(hyp * hyp) + ") = " + std::to_string(hyp) + "\n";
        } else {
            statement = "A right triangle's legs have squares " + std::to_string(legA * legA) +
                        " and " + std::to_string(legB * legB) + ".";
            steps = std::to_string(legA * legA) + " + " + std::to_string(legB * legB) + " = " +
                    std::to_string(hyp * hyp) + "\n";
            steps += "sqrt(" + std::to_string(hyp * hyp) + ") = " + std::to_string(hyp) + "\n";
        }
        statement += " Find the hypotenuse.";
        result = hyp;
        out.statement = statement;
        out.gold_chain = join_chain(geom_chain(plan));
        out.gold_steps = steps;
        out.gold_answer = std::to_string(result);
        return;
    }

    if (plan.triangles == 1) {
        // pick a base triple whose scale window can put the presented feature
        // (largest leg, or the hypotenuse for leg questions) at `digits` digits
        for (int attempt = 0;; ++attempt) {
            expect(attempt < 512, Errc::bad_difficulty, "geometry realization did not converge");
            const Triple base = kBases[rng.uniform_int(0, 5)];
            long long feature_unit = plan.kind == GeomPlan::leg_find ? base.c : base.b;
            auto [klo, khi] = k_window(feature_unit);
            if (klo > khi) continue;
            long long k = rng.uniform_int(klo, khi);
            legA = base.a * k;
            legB = base.b * k;
            hyp = base.c * k;
            break;
        }
        if (plan.kind == GeomPlan::leg_find) {
            statement = "A right triangle has hypotenuse " + std::to_string(hyp) + " and one leg " +
                        std::to_string(legA) + ".";
            steps += std::to_string(hyp) + "^2 = " + std::to_string(hyp * hyp) + "\n";
            steps += std::to_string(legA) + "^2 = " + std::to_string(legA * legA) + "\n";
            steps += std::to_string(hyp * hyp) + " - " + std::to_string(legA * legA) + " = " +
                     std::to_string(legB * legB) + "\n";
            steps += "sqrt(" + std::to_string(legB * legB) + ") = " + std::to_string(legB) + "\n";
            result = legB;
        } else {
            statement = "A right triangle has legs " + std::to_string(legA) + " and " +
                        std::to_string(legB) + ".";
            steps += std::to_string(legA) + "^2 = " + std::to_string(legA * legA) + "\n";
            steps += std::to_string(legB) + "^2 = " + std::to_string(legB * legB) + "\n";
            steps += std::to_string(legA * legA) + " + " + std::to_string(legB * legB) + " = " +
                     std::to_string(hyp * hyp) + "\n";
            steps += "sqrt(" + std::to_string(hyp * hyp) + ") = " + std::to_string(hyp) + "\n";
            result = hyp;
        }
    } else {
        const Triple* seq = plan.triangles == 2 ? kChain2 : kChain3;
        long long feature_unit = plan.triangles == 2 ? 12 : 84; // largest presented leg
        auto [klo, khi] = k_window(feature_unit);
        expect(klo <= khi, Errc::bad_difficulty, "no scale reaches the digit target");
        long long k = rng.uniform_int(klo, khi);
        legA = seq[0].a * k;
        legB = seq[0].b * k;
        hyp = seq[0].c * k;
        statement = "A right triangle has legs " + std::to_string(legA) + " and " +
                    std::to_string(legB) + ".";
        steps += std::to_string(legA) + "^2 = " + std::to_string(legA * legA) + "\n";
        steps += std::to_string(legB) + "^2 = " + std::to_string(legB * legB) + "\n";
        steps += std::to_string(legA * legA) + " + " + std::to_string(legB * legB) + " = " +
                 std::to_string(hyp * hyp) + "\n";
        steps += "sqrt(" + std::to_string(hyp * hyp) + ") = " + std::to_string(hyp) + "\n";
        for (int t = 1; t < plan.triangles; ++t) {
            long long other = seq[t].b * k;
            statement += t == 1
                             ? " Its hypotenuse is a leg of a second right triangle whose other leg is " +
                                   std::to_string(other) + "."
                             : " That hypotenuse is in turn a leg of a third right triangle whose "
                               "other leg is " +
                                   std::to_string(other) + ".";
            legA = hyp;
            legB = other;
            hyp = seq[t].c * k;
            steps += (t == 1 ? "second" : "third") + std::string(" triangle: legs ") +
                     std::to_string(legA) + " and " + std::to_string(legB) + "\n";
            steps += std::to_string(legA) + "^2 = " + std::to_string(legA * legA) + "\n";
            steps += std::to_string(legB) + "^2 = " + std::to_string(legB * legB) + "\n";
            steps += std::to_string(legA * legA) + " + " + std::to_string(legB * legB) + " = " +
                     std::to_string(hyp * hyp) + "\n";
            steps += "sqrt(" + std::to_string(hyp * hyp) + ") = " + std::to_string(hyp) + "\n";
        }
        result = hyp;
    }

    // tails consume the final triangle (legA, legB, hyp)
    if (plan.area) {
        long long prod = legA * legB;
        statement += " Find the area of the final triangle.";
        steps += std::to_string(legA) + " * " + std::to_string(legB) + " = " + std::to_string(prod) +
                 "\n";
        steps += std::to_string(prod) + " / 2 = " + std::to_string(prod / 2) + "\n";
        result = prod / 2;
    } else if (plan.perimeter) {
        long long per = legA + legB + hyp;
        statement += " Find the perimeter of the final triangle.";
        steps += std::to_string(legA) + " + " + std::to_string(legB) + " + " + std::to_string(hyp) +
                 " = " + std::to_string(per) + "\n";
        result = per;
    } else {
        statement += plan.kind == GeomPlan::leg_find ? " Find the other leg." : " Find the hypotenuse.";
    }
    if (plan.scale) {
        long long f = rng.uniform_int(2, 4);
        statement += " Finally multiply the result by " + std::to_string(f) + ".";
        steps += std::to_string(result) + " * " + std::to_string(f) + " = " +
                 std::to_string(result * f) + "\n";
        result *= f;
    }

    out.statement = statement;
    out.gold_chain = join_chain(geom_chain(plan));
    out.gold_steps = steps;
    out.gold_answer = std::to_string(result);
}

inline int digits_target_for_level(int level, Rng& rng, TaskFamily) {
    const auto& p = difficulty_profiles()[static_cast<size_t>(level - 1)];
    return static_cast<int>(rng.uniform_int(p.operand_digit_range.lo, p.operand_digit_range.hi));
}

inline void realize(TaskFamily family, int level, int digits, Rng& rng, TaskInstance& out) {
    switch (family) {
    case TaskFamily::chained_arithmetic:
        realize_arith(arith_plan_for_level(level, rng), digits, rng, out);
        break;
    case TaskFamily::linear_system:
        realize_linsys(linsys_plan_for_level(level, rng), digits, rng, out);
        break;
    case TaskFamily::geometry_steps:
        realize_geom(geom_plan_for_level(level, rng), digits, rng, out);
        break;
    }
}

} // namespace detail

inline TaskInstance generate_task(TaskFamily family, int level, uint64_t rng_seed) {
    expect(level >= 1 && level <= 5, Errc::bad_difficulty,
           "level must be 1..5, got " + std::to_string(level));
    Rng rng(rng_seed);
    TaskInstance out;
    out.family = family;
    int digits = detail::digits_target_for_level(level, rng, family);
    detail::realize(family, level, digits, rng, out);
    out.difficulty = score_difficulty(out);
    out.id = std::string(family_name(family)) + "-L" + std::to_string(level) + "-" + hex64(rng_seed);
    return out;
}

// Same chain template, fresh operands. degrade=true drops the operand-digit
// feature below the parent level's threshold, which lowers the recomputed
// difficulty by 1-2 levels (level <= 2 parents have nowhere lower to go).
inline TaskInstance generate_variant(const TaskInstance& parent, bool degrade, uint64_t rng_seed) {
    Rng rng(rng_seed);
    TaskInstance out;
    out.family = parent.family;
    out.parent_id = parent.id;
    auto steps = split_chain(parent.gold_chain);
    int parent_digits = max_statement_digits(parent.statement);
    int parent_level = score_difficulty(parent);
    int digits =
        degrade
            ? std::max(1, difficulty_profiles()[static_cast<size_t>(parent_level - 1)].operand_digit_range.lo - 1)
            : parent_digits;

    switch (parent.family) {
    case TaskFamily::chained_arithmetic: {
        auto plan = detail::arith_plan_from_chain(steps);
        expect(plan.has_value(), Errc::unknown_family, "unrecognized arithmetic chain template");
        detail::realize_arith(*plan, digits, rng, out);
        break;
    }
    case TaskFamily::linear_system: {
        auto plan = detail::linsys_plan_from_chain(steps);
        expect(plan.has_value(), Errc::unknown_family, "unrecognized linear-system chain template");
        detail::realize_linsys(*plan, digits, rng, out);
        break;
    }
    case TaskFamily::geometry_steps: {
        auto plan = detail::geom_plan_from_chain(steps);
        expect(plan.has_value(), Errc::unknown_family, "unrecognized geometry chain template");
        detail::realize_geom(*plan, digits, rng, out);
        break;
    }
    }
    expect(out.gold_chain == parent.gold_chain, Errc::unknown_family,
           "variant failed to reproduce the parent chain");
    out.difficulty = score_difficulty(out);
    out.id = parent.id + (degrade ? "-d" : "-v") + hex64(rng_seed).substr(8);
    return out;
}

// --- dataset emission ----------------------------------------------------------

struct MixtureEntry {
    TaskFamily family;
    int level;
    size_t count;
};

inline nlohmann::ordered_json task_to_json(const TaskInstance& t) {
    nlohmann::ordered_json j;
    j["id"] = t.id;
    j["statement"] = t.statement;
    j["chain"] = t.gold_chain;
    j["steps"] = t.gold_steps;
    j["answer"] = t.gold_answer;
    j["difficulty"] = t.difficulty;
    j["family"] = family_name(t.family);
    if (t.parent_id.empty()) j["parent_id"] = nullptr;
    else j["parent_id"] = t.parent_id;
    return j;
}

inline TaskInstance task_from_json(const nlohmann::json& j) {
    TaskInstance t;
    try {
        t.id = j.at("id").get<std::string>();
        t.statement = j.at("statement").get<std::string>();
        t.gold_chain = j.at("chain").get<std::string>();
        t.gold_steps = j.at("steps").get<std::string>();
        t.gold_answer = j.at("answer").get<std::string>();
        t.difficulty = j.at("difficulty").get<int>();
        t.family = family_from_name(j.at("family").get<std::string>());
        if (j.contains("parent_id") && !j.at("parent_id").is_null())
            t.parent_id = j.at("parent_id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::schema_mismatch, std::string("task record: ") + e.what());
    }
    return t;
}

inline void write_dataset(const std::vector<TaskInstance>& tasks, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    expect(f.good(), Errc::io_failure, "cannot open dataset for writing: " + path);
    for (const auto& t : tasks) f << task_to_json(t).dump() << "\n";
    expect(f.good(), Errc::io_failure, "dataset write failed: " + path);
}

inline size_t emit_dataset(const std::vector<MixtureEntry>& mixture, uint64_t rng_seed,
                           const std::string& path) {
    std::vector<TaskInstance> tasks;
    size_t index = 0;
    for (const auto& entry : mixture) {
        for (size_t i = 0; i < entry.count; ++i, ++index) {
            TaskInstance t =
                generate_task(entry.family, entry.level, derive_seed(rng_seed, "task", index));
            t.id = std::string(family_name(entry.family)).substr(0, 2) + std::to_string(entry.level) +
                   "-" + std::to_string(index);
            tasks.push_back(std::move(t));
        }
    }
    write_dataset(tasks, path);
    return tasks.size();
}

inline std::vector<TaskInstance> load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    expect(f.good(), Errc::io_failure, "cannot open dataset: " + path);
    std::vector<TaskInstance> tasks;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        expect(!j.is_discarded(), Errc::schema_mismatch,
               path + ":" + std::to_string(lineno) + ": invalid record");
        tasks.push_back(task_from_json(j));
    }
    return tasks;
}

} // namespace sst
