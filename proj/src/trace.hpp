// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <map>
#include <string>
#include <vector>

// FLOP accounting hooks. Every differentiable op reports its analytic cost
// to the innermost active FlopTracer on the calling thread. Costs use the
// MAC = 2 FLOPs convention.
namespace mtnet::trace {

struct Entry {
  std::string scope;
  std::string op;
  double flops;
};

class FlopTracer {
 public:
  /// With dry_run set, ops compute output shapes and costs but skip the
  /// arithmetic; outputs are zero-filled.
  explicit FlopTracer(bool dry_run = false);
  ~FlopTracer();
  FlopTracer(const FlopTracer&) = delete;
  FlopTracer& operator=(const FlopTracer&) = delete;

  bool dry_run() const { return dry_run_; }
  double total() const;
  /// Totals keyed by the leading `depth` components of the scope path.
  std::map<std::string, double> by_scope(int depth = 1) const;
  const std::vector<Entry>& entries() const { return entries_; }
  const std::vector<std::string>& untraced() const { return untraced_; }

  void add(const char* op, double flops);
  void add_untraced(const std::string& op);

 private:
  bool dry_run_;
  FlopTracer* previous_;
  std::vector<Entry> entries_;
  std::vector<std::string> untraced_;
};

/// Names a module for the duration of a forward call; nests as a path.
class Scope {
 public:
  explicit Scope(const std::string& name);
  ~Scope();
  Scope(const Scope&) = delete;
  Scope& operator=(const Scope&) = delete;
};

void record(const char* op, double flops);
/// For ops without an analytic formula (e.g. third-party extractor plugins).
void record_untraced(const std::string& op);
bool dry_run();
bool active();
std::string current_scope();

}  // namespace mtnet::trace
