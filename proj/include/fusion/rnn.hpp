#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fusion/tensor.hpp"

namespace fusion {

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

struct LstmParams {
  int input_dim = 0;
  int hidden_dim = 0;
  Tensor w_i, w_f, w_o, w_g;  // hidden x input
  Tensor u_i, u_f, u_o, u_g;  // hidden x hidden
  Tensor b_i, b_f, b_o, b_g;  // hidden; forget bias starts at 1

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct GruParams {
  int input_dim = 0;
  int hidden_dim = 0;
  Tensor w_z, w_r, w_h;
  Tensor u_z, u_r, u_h;
  Tensor b_z, b_r, b_h;

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct BiLstmLayer {
  LstmParams fwd;
  LstmParams bwd;
};

// Stack of bidirectional layers. Layer l's input is the previous layer's
// output (2 x per-direction hidden), prefixed with the raw stack input when
// `shortcut` is set.
struct BiLstmStack {
  std::vector<BiLstmLayer> layers;
  bool shortcut = false;
  int input_dim = 0;
  int output_dim = 0;  // per-layer output width, split across directions

  void visit(const std::string& prefix, const ParamVisitor& fn);
  void set_requires_grad(bool on);
};

LstmParams make_lstm(int input_dim, int hidden_dim, std::uint64_t seed,
                     const std::string& scope);
GruParams make_gru(int input_dim, int hidden_dim, std::uint64_t seed, const std::string& scope);
BiLstmStack make_bilstm_stack(int input_dim, int output_dim, int num_layers, bool shortcut,
                              std::uint64_t seed, const std::string& scope);

// One cell update: returns (h', c').
std::pair<Tensor, Tensor> lstm_step(Graph& g, const Tensor& x, const Tensor& h, const Tensor& c,
                                    const LstmParams& p);
Tensor gru_step(Graph& g, const Tensor& x, const Tensor& h, const GruParams& p);

// One bidirectional layer over a [len x d] sequence matrix, zero initial
// states. `input_mask`, when given, is multiplied into every row of the
// input before stepping, which is what shares one dropout mask across all
// time steps of the layer.
Tensor bilstm_layer(Graph& g, const Tensor& seq, const BiLstmLayer& layer,
                    const Tensor* input_mask = nullptr);

// Full stack; returns every layer's output ([len x output_dim] each).
// `masks`, when non-empty, supplies one shared input mask per layer.
std::vector<Tensor> bilstm_all_layers(Graph& g, const Tensor& seq, const BiLstmStack& stack,
                                      std::span<const Tensor> masks = {});

// Last layer's output.
Tensor bilstm(Graph& g, const Tensor& seq, const BiLstmStack& stack,
              std::span<const Tensor> masks = {});

// Sequence-of-vectors convenience entry; rejects empty sequences.
Tensor bilstm(Graph& g, const std::vector<Tensor>& seq, const BiLstmStack& stack,
              std::span<const Tensor> masks = {});

}  // namespace fusion
