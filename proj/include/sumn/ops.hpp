#pragma once

#include <span>

#include "sumn/matrix.hpp"

namespace sumn {

inline constexpr float kLayerNormEps = 1e-5f;

// y = W x. W is (out x in), x has length in.
Vector linear(const Matrix& W, const Vector& x);

// Backward of linear: accumulates dW += g (outer) x, overwrites dx = W^T g.
void linear_backward(const Matrix& W, const Vector& x, const Vector& g, Matrix& dW,
                     Vector& dx);

// y = gain * (x - mean) / sqrt(var + eps) + bias, population variance.
Vector layer_norm(const Vector& x, const Vector& gain, const Vector& bias,
                  float eps = kLayerNormEps);

// Backward of layer_norm: overwrites dx, accumulates dgain and dbias.
void layer_norm_backward(const Vector& x, const Vector& gain, const Vector& g,
                         Vector& dx, Vector& dgain, Vector& dbias,
                         float eps = kLayerNormEps);

// Max-shifted softmax over the full vector.
Vector softmax(const Vector& logits);

// Backward of softmax given its output y: overwrites dlogits.
void softmax_backward(const Vector& y, const Vector& g, Vector& dlogits);

// Arithmetic mean across rows; errors on an empty matrix.
Vector mean_rows(const Matrix& M);

double dot(const Vector& a, const Vector& b);

// y += a * x
void axpy(float a, const Vector& x, Vector& y);

}  // namespace sumn
