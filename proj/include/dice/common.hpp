#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dice {

// Architectural constants shared by compiler and simulator.
inline constexpr int kNumGpr = 32;    // logical GPRs per thread, also RF banks
inline constexpr int kNumPred = 2;    // predicate registers, bitmap bits 32..33
inline constexpr int kRegBitmapWidth = kNumGpr + kNumPred;
inline constexpr int kMaxLdstPorts = 4;
inline constexpr int kNoPGraph = 0xFF;  // "none"/"exit" in 8-bit p-graph index fields
inline constexpr int kSectorBytes = 32;

/// Bitmap index of predicate register `p`.
constexpr int pred_bit(int p) { return kNumGpr + p; }

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(int line, int column, const std::string& msg)
      : Error("line " + std::to_string(line) + ", col " + std::to_string(column) + ": " + msg),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

class CompileError : public Error {
 public:
  using Error::Error;
};

class MapError : public Error {
 public:
  using Error::Error;
};

class EncodeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SimError : public Error {
 public:
  using Error::Error;
};

/// Memory fault raised by the scalar interpreter or the simulator.
class Trap : public Error {
 public:
  Trap(const std::string& msg, int pc, int tid)
      : Error("trap at pc " + std::to_string(pc) + " tid " + std::to_string(tid) + ": " + msg),
        pc_(pc),
        tid_(tid) {}
  int pc() const { return pc_; }
  int tid() const { return tid_; }

 private:
  int pc_;
  int tid_;
};

}  // namespace dice
