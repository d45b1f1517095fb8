#pragma once

#include <string>
#include <vector>

#include "halp/basis.hpp"
#include "halp/halp.hpp"
#include "halp/model.hpp"

namespace halp {

/// Parses a model document. Shape problems raise ParseError; invariant
/// violations raise ValidationError carrying the full violation list. The
/// returned model is bound and ready for evaluation.
HybridModel parse_model(const std::string& json_text, const std::string& origin = "<string>");
HybridModel load_model(const std::string& path);
std::string serialize_model(const HybridModel& model);

struct BasisFile {
  std::vector<BasisFunction> basis;
  StateRelevanceDensity psi;  // defaults to the uniform product density
};

BasisFile parse_basis(const std::string& json_text, const HybridModel& model,
                      const std::string& origin = "<string>");
BasisFile load_basis(const std::string& path, const HybridModel& model);
std::string serialize_basis(const std::vector<BasisFunction>& basis,
                            const StateRelevanceDensity& psi);

struct SolutionFile {
  std::vector<double> weights;
  double objective = 0.0;
  double eps = 1.0;
  double measured_delta = 0.0;
  std::string basis_ref;
  int constraints_added = 0;
  std::string search;       // "exhaustive" | "greedy"
  std::string delta_probe;  // "grid" | "sample"
  std::string status;       // "optimal" | "budget_exceeded"
};

SolutionFile solution_from(const HalpSolution& sol, const std::string& basis_ref);
std::string serialize_solution(const SolutionFile& sol);
SolutionFile parse_solution(const std::string& json_text, const std::string& origin = "<string>");
SolutionFile load_solution(const std::string& path);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace halp
