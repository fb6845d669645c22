#include "cheyette/script/lexer.hpp"

#include <cctype>
#include <cstdlib>
#include <sstream>

#include "cheyette/errors.hpp"

namespace cheyette::script {

namespace {

[[noreturn]] void fail(int line, int col, const std::string& msg) {
    std::ostringstream out;
    out << "script:" << line << ":" << col << ": " << msg;
    throw ValidationError(out.str());
}

// Strips the unquoted-# comment and, when the remainder ends with a
// backslash, marks the line as continued.
std::string strip_comment(const std::string& raw, int lineno, bool* continued) {
    std::string out;
    bool in_string = false;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const char c = raw[i];
        if (c == '"') in_string = !in_string;
        if (c == '#' && !in_string) break;
        out.push_back(c);
    }
    if (in_string) fail(lineno, static_cast<int>(out.size()), "unterminated string literal");
    while (!out.empty() && (out.back() == ' ' || out.back() == '\t' || out.back() == '\r'))
        out.pop_back();
    *continued = !out.empty() && out.back() == '\\';
    if (*continued) out.pop_back();
    return out;
}

void tokenize(const std::string& text, int lineno, std::vector<Token>* toks) {
    std::size_t i = 0;
    const auto col = [&] { return static_cast<int>(i) + 1; };
    while (i < text.size()) {
        const char c = text[i];
        if (c == ' ' || c == '\t' || c == '\r') {
            ++i;
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const int start = col();
            std::size_t j = i;
            while (j < text.size() &&
                   (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
                ++j;
            toks->push_back({TokKind::Ident, text.substr(i, j - i), 0.0, lineno, start});
            i = j;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && i + 1 < text.size() &&
             std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
            const int start = col();
            std::size_t j = i;
            while (j < text.size() &&
                   (std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '.'))
                ++j;
            if (j < text.size() && (text[j] == 'e' || text[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < text.size() && (text[k] == '+' || text[k] == '-')) ++k;
                if (k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]))) {
                    ++k;
                    while (k < text.size() &&
                           std::isdigit(static_cast<unsigned char>(text[k])))
                        ++k;
                    j = k;
                }
            }
            const std::string lit = text.substr(i, j - i);
            char* end = nullptr;
            const double value = std::strtod(lit.c_str(), &end);
            if (end != lit.c_str() + lit.size()) fail(lineno, start, "bad number '" + lit + "'");
            toks->push_back({TokKind::Number, lit, value, lineno, start});
            i = j;
            continue;
        }
        if (c == '"') {
            const int start = col();
            std::size_t j = i + 1;
            std::string value;
            while (j < text.size() && text[j] != '"') {
                value.push_back(text[j]);
                ++j;
            }
            if (j == text.size()) fail(lineno, start, "unterminated string literal");
            toks->push_back({TokKind::String, value, 0.0, lineno, start});
            i = j + 1;
            continue;
        }
        const int start = col();
        if ((c == '<' || c == '>' || c == '=' || c == '!') && i + 1 < text.size() &&
            text[i + 1] == '=') {
            toks->push_back({TokKind::Sym, text.substr(i, 2), 0.0, lineno, start});
            i += 2;
            continue;
        }
        static const std::string singles = "+-*/%()[],:=<>";
        if (singles.find(c) != std::string::npos) {
            toks->push_back({TokKind::Sym, std::string(1, c), 0.0, lineno, start});
            ++i;
            continue;
        }
        fail(lineno, start, std::string("unexpected character '") + c + "'");
    }
}

}  // namespace

std::vector<LogicalLine> lex(const std::string& text) {
    std::vector<LogicalLine> lines;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    std::string pending;
    int pending_line = 0;
    bool continuing = false;
    const auto flush = [&](const std::string& logical, int at) {
        LogicalLine ll;
        ll.line = at;
        tokenize(logical, at, &ll.toks);
        if (ll.toks.empty()) return;
        ll.toks.push_back({TokKind::End, "", 0.0, at, static_cast<int>(logical.size()) + 1});
        lines.push_back(std::move(ll));
    };
    while (std::getline(in, raw)) {
        ++lineno;
        bool continued = false;
        const std::string part = strip_comment(raw, lineno, &continued);
        if (!continuing) {
            pending = part;
            pending_line = lineno;
        } else {
            pending += " " + part;
        }
        continuing = continued;
        if (!continuing) {
            flush(pending, pending_line);
            pending.clear();
        }
    }
    if (continuing) flush(pending, pending_line);
    return lines;
}

}  // namespace cheyette::script
