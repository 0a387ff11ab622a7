#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "lab/matrix.hpp"
#include "lab/numeric.hpp"

namespace lab {

// Text dump formats. Values are written as shortest round-trip decimals so a
// dump/load cycle is exact.
//
//   TENSOR v1 <rows> <cols>          followed by <rows> lines of <cols> values
//   RAGGED v1 <modality> <N> <D>     followed by N TENSOR blocks
//   PARAMS v1 <count>                followed by <count> x (NAME <name>, TENSOR block)

std::string format_double(double v);

void write_tensor(std::ostream& out, const Matrix& m);
Matrix read_tensor(std::istream& in);

void write_ragged(std::ostream& out, const RaggedBatch& batch);
RaggedBatch read_ragged(std::istream& in);

using NamedTensors = std::map<std::string, Matrix>;

void write_params(std::ostream& out, const NamedTensors& params);
NamedTensors read_params(std::istream& in);

}  // namespace lab
