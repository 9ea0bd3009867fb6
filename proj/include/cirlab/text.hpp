#pragma once

// Textual ".cir" format.
//
//   class Node extends Base { fields next, value; methods get; }
//   global list = new List
//   global buf = newarray 16
//
//   fn sum(a, n) {
//   entry:
//     br head(0, 0)
//   head(i, acc):
//     c = cmplt i, n
//     cbr c, body, exit
//   ...
//   }
//
//   thread main(8, @buf)
//
// Operands are SSA names, integer literals, true/false/null, or @global.
// `const K` is accepted wherever an operand is expected, and an instruction's
// operand list may be wrapped in parentheses (`output(const 7)`). The printer
// emits the canonical form: one instruction per line, two-space indent.

#include <string>
#include <string_view>

#include "cirlab/ir.hpp"

namespace cirlab {

/// Parses and resolves a program. Throws ParseError on malformed text and
/// ResolutionError when a class, field, function, label, or global is unknown.
Program parse_program(std::string_view text);

/// Syntax-only parse; name resolution is left to validate().
Program parse_program_unresolved(std::string_view text);

std::string print_program(const Program& program);
std::string print_function(const Function& fn);
std::string print_instruction(const Instruction& instr);
std::string print_operand(const Operand& op);

} // namespace cirlab
