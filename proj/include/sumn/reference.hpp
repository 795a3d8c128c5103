#pragma once

#include "sumn/corpus.hpp"
#include "sumn/model.hpp"

namespace sumn {

// Double-precision re-implementation of the full forward loss, written
// independently of the float path. Gradient checking differentiates this
// function numerically, so the single-precision rounding of the production
// forward never enters the difference quotient.
double reference_loss(const TrainingSample& sample, const ModelParams& params,
                      Variant variant = Variant::SUMN);

}  // namespace sumn
