#ifndef SRVSIM_DSL_HPP
#define SRVSIM_DSL_HPP

// Line-oriented gadget language.
//
//   array <name> <elem_size> <length> [linked <name> <offset>]
//   param <name> = <int>
//   init <name>[<idx>] = <int>
//   init <name>[*] = <expr over z>          (fills every element; z is the element index)
//   loop <trip_count>:
//       <dst>[<expr>] = <expr>              (indented, one statement per line)
//   for z in 0..<trip_count> { <stmt>; ... } (alternative loop form)
//   probe <name>[<idx>]
//   probe <name>[<lo>..<hi>:<step>]         (expands to one probe per element)
//
// Expressions use C precedence over + - * ^ << >> && || == != < and ?:.

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "srvsim/isa.hpp"

namespace srvsim
{

namespace dsl_detail
{

enum class Tok
{
    Ident,
    Int,
    Sym,
    Newline,
    End
};

struct Token
{
    Tok kind = Tok::End;
    std::string text;
    Word value = 0;
    int line = 1;
    int col = 1;
    bool indented = false; // first token of its line and preceded by whitespace
};

inline std::vector<Token> tokenize(std::string_view src)
{
    static const char* const two_char[] = {"..", "||", "&&", "==", "!=", "<<", ">>"};
    std::vector<Token> out;
    int line = 1;
    int col = 1;
    bool line_start = true;
    bool saw_space = false;
    std::size_t i = 0;
    auto push = [&](Token t) {
        t.indented = line_start && saw_space;
        line_start = false;
        out.push_back(std::move(t));
    };
    while (i < src.size()) {
        const char ch = src[i];
        if (ch == '\n') {
            out.push_back({Tok::Newline, "\n", 0, line, col, false});
            ++line;
            col = 1;
            ++i;
            line_start = true;
            saw_space = false;
            continue;
        }
        if (ch == '\r' || ch == ' ' || ch == '\t') {
            if (line_start) saw_space = true;
            ++i;
            ++col;
            continue;
        }
        if (ch == '#') {
            while (i < src.size() && src[i] != '\n') ++i;
            continue;
        }
        const int start_col = col;
        if (std::isdigit(static_cast<unsigned char>(ch))) {
            std::size_t j = i;
            int base = 10;
            if (ch == '0' && j + 1 < src.size() && (src[j + 1] == 'x' || src[j + 1] == 'X')) {
                base = 16;
                j += 2;
            }
            const std::size_t digits = j;
            while (j < src.size() && std::isxdigit(static_cast<unsigned char>(src[j])) &&
                (base == 16 || std::isdigit(static_cast<unsigned char>(src[j]))))
                ++j;
            if (j == digits) throw SyntaxError(line, start_col, "malformed integer literal");
            const std::string text(src.substr(i, j - i));
            Token t{Tok::Int, text, 0, line, start_col};
            try {
                t.value = static_cast<Word>(std::stoull(text, nullptr, 0));
            }
            catch (const std::exception&) {
                throw SyntaxError(line, start_col, "integer literal out of range");
            }
            push(std::move(t));
            col += static_cast<int>(j - i);
            i = j;
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
            std::size_t j = i;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
            push({Tok::Ident, std::string(src.substr(i, j - i)), 0, line, start_col});
            col += static_cast<int>(j - i);
            i = j;
            continue;
        }
        bool matched = false;
        for (const char* op : two_char) {
            if (src.substr(i, 2) == op) {
                push({Tok::Sym, op, 0, line, start_col});
                i += 2;
                col += 2;
                matched = true;
                break;
            }
        }
        if (matched) continue;
        if (std::string_view("[](){}=+-*^<?:;,").find(ch) != std::string_view::npos) {
            push({Tok::Sym, std::string(1, ch), 0, line, start_col});
            ++i;
            ++col;
            continue;
        }
        throw SyntaxError(line, start_col, std::string("unexpected character '") + ch + "'");
    }
    out.push_back({Tok::End, "", 0, line, col, false});
    return out;
}

class Parser
{
public:
    explicit Parser(std::vector<Token> toks)
        : toks_(std::move(toks))
    {
    }

    GadgetProgram parse()
    {
        bool have_loop = false;
        while (true) {
            skip_newlines();
            if (peek().kind == Tok::End) break;
            const Token& t = peek();
            if (t.kind != Tok::Ident) fail(t, "expected a declaration keyword");
            if (t.text == "array") parse_array();
            else if (t.text == "param") parse_param();
            else if (t.text == "init") parse_init();
            else if (t.text == "probe") parse_probe();
            else if (t.text == "loop" || t.text == "for") {
                if (have_loop) fail(t, "only one loop is allowed");
                have_loop = true;
                if (t.text == "loop") parse_loop_block();
                else parse_for_block();
            }
            else fail(t, "unknown keyword '" + t.text + "'");
        }
        if (!have_loop) throw ValidationError("program has no loop");
        expand_inits();
        validate(prog_);
        return std::move(prog_);
    }

private:
    const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
    const Token& next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }

    [[noreturn]] static void fail(const Token& t, const std::string& what)
    {
        throw SyntaxError(t.line, t.col, what);
    }

    bool is_sym(const std::string& s, std::size_t k = 0) const
    {
        return peek(k).kind == Tok::Sym && peek(k).text == s;
    }

    void expect_sym(const std::string& s)
    {
        const Token& t = next();
        if (t.kind != Tok::Sym || t.text != s) fail(t, "expected '" + s + "'");
    }

    std::string expect_ident()
    {
        const Token& t = next();
        if (t.kind != Tok::Ident) fail(t, "expected an identifier");
        return t.text;
    }

    void expect_keyword(const std::string& kw)
    {
        const Token& t = next();
        if (t.kind != Tok::Ident || t.text != kw) fail(t, "expected '" + kw + "'");
    }

    Word expect_int()
    {
        bool neg = false;
        if (is_sym("-")) {
            next();
            neg = true;
        }
        const Token& t = next();
        if (t.kind != Tok::Int) fail(t, "expected an integer");
        return neg ? -t.value : t.value;
    }

    std::uint64_t expect_count()
    {
        const Token& t = peek();
        const Word v = expect_int();
        if (v < 0) fail(t, "expected a non-negative integer");
        return static_cast<std::uint64_t>(v);
    }

    void end_of_line()
    {
        const Token& t = next();
        if (t.kind != Tok::Newline && t.kind != Tok::End) fail(t, "expected end of line");
    }

    void skip_newlines()
    {
        while (peek().kind == Tok::Newline) next();
    }

    void parse_array()
    {
        next();
        ArrayDecl a;
        a.name = expect_ident();
        a.elem_size = static_cast<unsigned>(expect_count());
        a.length = expect_count();
        if (peek().kind == Tok::Ident && peek().text == "linked") {
            next();
            ArrayLink l;
            l.target = expect_ident();
            l.offset = expect_count();
            a.link = l;
        }
        end_of_line();
        prog_.arrays.push_back(std::move(a));
    }

    void parse_param()
    {
        next();
        const std::string name = expect_ident();
        expect_sym("=");
        const Word v = expect_int();
        end_of_line();
        prog_.params.emplace_back(name, v);
    }

    void parse_init()
    {
        next();
        const std::string name = expect_ident();
        expect_sym("[");
        if (is_sym("*")) {
            next();
            expect_sym("]");
            expect_sym("=");
            const Token& at = peek();
            ExprPtr e = parse_expr();
            if (references_memory(*e)) fail(at, "fill expression must not read memory");
            end_of_line();
            inits_.push_back({{name, 0, 0}, std::move(e)});
            return;
        }
        const std::uint64_t idx = expect_count();
        expect_sym("]");
        expect_sym("=");
        const Word v = expect_int();
        end_of_line();
        inits_.push_back({{name, idx, v}, nullptr});
    }

    void expand_inits()
    {
        for (const auto& [init, fill] : inits_) {
            if (!fill) {
                prog_.prologue.push_back(init);
                continue;
            }
            const auto* a = prog_.find_array(init.array);
            if (!a) throw ValidationError("init: undeclared array '" + init.array + "'");
            detail::validate_expr(prog_, *fill, "init");
            for (std::uint64_t i = 0; i < a->length; ++i) {
                const Word v = evaluate(*fill, static_cast<Word>(i), prog_, [](const Expr&, Word) -> Word { return 0; });
                prog_.prologue.push_back({init.array, i, v});
            }
        }
    }

    void parse_probe()
    {
        next();
        const std::string name = expect_ident();
        expect_sym("[");
        const std::uint64_t lo = expect_count();
        if (is_sym("..")) {
            next();
            const std::uint64_t hi = expect_count();
            std::uint64_t step = 1;
            if (is_sym(":")) {
                next();
                const Token& st = peek();
                step = expect_count();
                if (step == 0) fail(st, "probe step must be positive");
            }
            expect_sym("]");
            end_of_line();
            for (std::uint64_t i = lo; i < hi; i += step) prog_.epilogue.push_back({name, i});
            return;
        }
        expect_sym("]");
        end_of_line();
        prog_.epilogue.push_back({name, lo});
    }

    void parse_loop_block()
    {
        next();
        prog_.trip_count = expect_count();
        expect_sym(":");
        end_of_line();
        while (true) {
            while (peek().kind == Tok::Newline) next();
            if (peek().kind == Tok::End || !peek().indented) break;
            prog_.loop.push_back(parse_statement());
            end_of_line();
        }
    }

    void parse_for_block()
    {
        next();
        const Token& var = peek();
        if (expect_ident() != "z") fail(var, "the loop variable must be 'z'");
        expect_keyword("in");
        const Token& lo_tok = peek();
        if (expect_count() != 0) fail(lo_tok, "loops start at 0");
        expect_sym("..");
        prog_.trip_count = expect_count();
        expect_sym("{");
        while (true) {
            while (peek().kind == Tok::Newline || is_sym(";")) next();
            if (is_sym("}")) {
                next();
                break;
            }
            if (peek().kind == Tok::End) fail(peek(), "unterminated loop body");
            prog_.loop.push_back(parse_statement());
            if (!is_sym(";") && !is_sym("}") && peek().kind != Tok::Newline) fail(peek(), "expected ';' or newline");
        }
        end_of_line();
    }

    Statement parse_statement()
    {
        Statement st;
        st.dst = expect_ident();
        expect_sym("[");
        st.dst_index = parse_expr();
        expect_sym("]");
        expect_sym("=");
        st.rhs = parse_expr();
        return st;
    }

    ExprPtr parse_expr()
    {
        ExprPtr cond = parse_binary(0);
        if (is_sym("?")) {
            next();
            ExprPtr t = parse_expr();
            expect_sym(":");
            ExprPtr f = parse_expr();
            return expr::select(std::move(cond), std::move(t), std::move(f));
        }
        return cond;
    }

    static int precedence(const Token& t, BinOp& op)
    {
        if (t.kind != Tok::Sym) return -1;
        static const std::pair<const char*, std::pair<BinOp, int>> table[] = {
            {"||", {BinOp::LogOr, 1}},
            {"&&", {BinOp::LogAnd, 2}},
            {"^", {BinOp::Xor, 3}},
            {"==", {BinOp::Eq, 4}},
            {"!=", {BinOp::Ne, 4}},
            {"<", {BinOp::Lt, 5}},
            {"<<", {BinOp::Shl, 6}},
            {">>", {BinOp::Shr, 6}},
            {"+", {BinOp::Add, 7}},
            {"-", {BinOp::Sub, 7}},
            {"*", {BinOp::Mul, 8}},
        };
        for (const auto& [sym, entry] : table)
            if (t.text == sym) {
                op = entry.first;
                return entry.second;
            }
        return -1;
    }

    ExprPtr parse_binary(int min_prec)
    {
        ExprPtr lhs = parse_primary();
        while (true) {
            BinOp op{};
            const int prec = precedence(peek(), op);
            if (prec < 0 || prec < min_prec) break;
            next();
            ExprPtr rhs = parse_binary(prec + 1);
            lhs = expr::bin(op, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    ExprPtr parse_primary()
    {
        const Token& t = peek();
        if (is_sym("(")) {
            next();
            ExprPtr e = parse_expr();
            expect_sym(")");
            return e;
        }
        if (is_sym("-") || t.kind == Tok::Int) return expr::lit(expect_int());
        if (t.kind == Tok::Ident) {
            std::string name = next().text;
            if (name == "z") return expr::z();
            if (is_sym("[")) {
                next();
                ExprPtr idx = parse_expr();
                expect_sym("]");
                return expr::read(std::move(name), std::move(idx));
            }
            return expr::param(std::move(name));
        }
        fail(t, "expected an expression");
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    GadgetProgram prog_;
    std::vector<std::pair<ElementInit, ExprPtr>> inits_; // fill expression or null
};

inline void print_expr(std::ostream& os, const Expr& e)
{
    switch (e.kind) {
        case ExprKind::Literal: os << e.literal; return;
        case ExprKind::Induction: os << 'z'; return;
        case ExprKind::Param: os << e.name; return;
        case ExprKind::Read:
            os << e.name << '[';
            print_expr(os, *e.a);
            os << ']';
            return;
        case ExprKind::Binary:
            os << '(';
            print_expr(os, *e.a);
            os << ' ' << to_string(e.op) << ' ';
            print_expr(os, *e.b);
            os << ')';
            return;
        case ExprKind::Select:
            os << '(';
            print_expr(os, *e.a);
            os << " ? ";
            print_expr(os, *e.b);
            os << " : ";
            print_expr(os, *e.c);
            os << ')';
            return;
    }
}

} // namespace dsl_detail

/// Parses and validates gadget source. Throws SyntaxError or ValidationError.
inline GadgetProgram parse_gadget(std::string_view text)
{
    return dsl_detail::Parser(dsl_detail::tokenize(text)).parse();
}

inline GadgetProgram load_gadget_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open gadget file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_gadget(ss.str());
}

inline std::string to_string(const Expr& e)
{
    std::ostringstream os;
    dsl_detail::print_expr(os, e);
    return os.str();
}

/// Canonical source form; parse_gadget(pretty_print(p)) == p.
inline std::string pretty_print(const GadgetProgram& p)
{
    std::ostringstream os;
    for (const auto& a : p.arrays) {
        os << "array " << a.name << ' ' << a.elem_size << ' ' << a.length;
        if (a.link) os << " linked " << a.link->target << ' ' << a.link->offset;
        os << '\n';
    }
    for (const auto& [name, value] : p.params) os << "param " << name << " = " << value << '\n';
    for (const auto& init : p.prologue) os << "init " << init.array << '[' << init.index << "] = " << init.value << '\n';
    os << "loop " << p.trip_count << ":\n";
    for (const auto& st : p.loop) {
        os << "    " << st.dst << '[';
        dsl_detail::print_expr(os, *st.dst_index);
        os << "] = ";
        dsl_detail::print_expr(os, *st.rhs);
        os << '\n';
    }
    for (const auto& probe : p.epilogue) os << "probe " << probe.array << '[' << probe.index << "]\n";
    return os.str();
}

} // namespace srvsim

#endif
