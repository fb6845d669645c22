#pragma once

#include <string>
#include <vector>

namespace cheyette::script {

enum class TokKind { Ident, Number, String, Sym, End };

struct Token {
    TokKind kind;
    std::string text;
    double num = 0.0;
    int line = 0;
    int col = 0;
};

/// One statement: a physical line joined across backslash continuations,
/// with comments stripped. Always ends with an End token.
struct LogicalLine {
    std::vector<Token> toks;
    int line = 0;
};

std::vector<LogicalLine> lex(const std::string& text);

}  // namespace cheyette::script
