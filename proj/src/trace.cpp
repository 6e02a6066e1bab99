// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "trace.hpp"

namespace mtnet::trace {

namespace {
thread_local FlopTracer* g_tracer = nullptr;
thread_local std::vector<std::string> g_scopes;

std::string join_scopes(size_t depth) {
  std::string out;
  for (size_t i = 0; i < g_scopes.size() && i < depth; ++i) {
    if (i) out += '/';
    out += g_scopes[i];
  }
  return out.empty() ? std::string("(root)") : out;
}
}  // namespace

FlopTracer::FlopTracer(bool dry_run) : dry_run_(dry_run), previous_(g_tracer) {
  g_tracer = this;
}

FlopTracer::~FlopTracer() { g_tracer = previous_; }

double FlopTracer::total() const {
  double t = 0.0;
  for (const auto& e : entries_) t += e.flops;
  return t;
}

std::map<std::string, double> FlopTracer::by_scope(int depth) const {
  std::map<std::string, double> out;
  for (const auto& e : entries_) {
    size_t pos = 0;
    for (int i = 0; i < depth && pos != std::string::npos; ++i) {
      pos = e.scope.find('/', pos == 0 && i == 0 ? 0 : pos + 1);
    }
    out[pos == std::string::npos ? e.scope : e.scope.substr(0, pos)] += e.flops;
  }
  return out;
}

void FlopTracer::add(const char* op, double flops) {
  entries_.push_back({join_scopes(g_scopes.size()), op, flops});
}

void FlopTracer::add_untraced(const std::string& op) {
  untraced_.push_back(join_scopes(g_scopes.size()) + ":" + op);
}

Scope::Scope(const std::string& name) { g_scopes.push_back(name); }
Scope::~Scope() { g_scopes.pop_back(); }

void record(const char* op, double flops) {
  if (g_tracer) g_tracer->add(op, flops);
}

void record_untraced(const std::string& op) {
  if (g_tracer) g_tracer->add_untraced(op);
}

bool dry_run() { return g_tracer && g_tracer->dry_run(); }
bool active() { return g_tracer != nullptr; }
std::string current_scope() { return join_scopes(g_scopes.size()); }

}  // namespace mtnet::trace
