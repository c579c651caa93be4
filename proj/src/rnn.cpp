#include "fusion/rnn.hpp"

#include "fusion/rng.hpp"

namespace fusion {

namespace {

Tensor fan_in_param(const Shape& shape, std::uint64_t seed, const std::string& name) {
  return init_param(shape, InitScheme::uniform_fan_in, seed, Rng::stream_key(name.c_str()));
}

}  // namespace

void LstmParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".w_i", w_i);
  fn(prefix + ".w_f", w_f);
  fn(prefix + ".w_o", w_o);
  fn(prefix + ".w_g", w_g);
  fn(prefix + ".u_i", u_i);
  fn(prefix + ".u_f", u_f);
  fn(prefix + ".u_o", u_o);
  fn(prefix + ".u_g", u_g);
  fn(prefix + ".b_i", b_i);
  fn(prefix + ".b_f", b_f);
  fn(prefix + ".b_o", b_o);
  fn(prefix + ".b_g", b_g);
}

void GruParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".w_z", w_z);
  fn(prefix + ".w_r", w_r);
  fn(prefix + ".w_h", w_h);
  fn(prefix + ".u_z", u_z);
  fn(prefix + ".u_r", u_r);
  fn(prefix + ".u_h", u_h);
  fn(prefix + ".b_z", b_z);
  fn(prefix + ".b_r", b_r);
  fn(prefix + ".b_h", b_h);
}

void BiLstmStack::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].fwd.visit(prefix + ".l" + std::to_string(l) + ".fwd", fn);
    layers[l].bwd.visit(prefix + ".l" + std::to_string(l) + ".bwd", fn);
  }
}

void BiLstmStack::set_requires_grad(bool on) {
  visit("", [on](const std::string&, Tensor& t) { t.set_requires_grad(on); });
}

LstmParams make_lstm(int input_dim, int hidden_dim, std::uint64_t seed,
                     const std::string& scope) {
  if (input_dim < 1 || hidden_dim < 1)
    throw ConfigError("lstm dims must be positive: " + scope);
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_i = fan_in_param({hidden_dim, input_dim}, seed, scope + ".w_i");
  p.w_f = fan_in_param({hidden_dim, input_dim}, seed, scope + ".w_f");
  p.w_o = fan_in_param({hidden_dim, input_dim}, seed, scope + ".w_o");
  p.w_g = fan_in_param({hidden_dim, input_dim}, seed, scope + ".w_g");
  p.u_i = fan_in_param({hidden_dim, hidden_dim}, seed, scope + ".u_i");
  p.u_f = fan_in_param({hidden_dim, hidden_dim}, seed, scope + ".u_f");
  p.u_o = fan_in_param({hidden_dim, hidden_dim}, seed, scope + ".u_o");
  p.u_g = fan_in_param({hidden_dim, hidden_dim}, seed, scope + ".u_g");
  p.b_i = init_param({hidden_dim}, InitScheme::zeros, seed);
  p.b_f = init_param({hidden_dim}, InitScheme::ones, seed);
  p.b_o = init_param({hidden_dim}, InitScheme::zeros, seed);
  p.b_g = init_param({hidden_dim}, InitScheme::zeros, seed);
  return p;
}

GruParams make_gru(int input_dim, int hidden_dim, std::uint64_t seed, const std::string& scope) {
  if (input_dim < 1 || hidden_dim < 1)
    throw ConfigError("gru dims must be positive: " + scope);
  GruParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_z = fan_in_param({hidden_dim, input_dim}, seed, scope + ".w_z");
  p.w_r = fan_in_param({hidden_dim, input_dim}, seed, scope + ".w_r");
  p.w_h = fan_in_param({hidden_dim, input_dim}, seed, scope + ".w_h");
  p.u_z = fan_in_param({hidden_dim, hidden_dim}, seed, scope + ".u_z");
  p.u_r = fan_in_param({hidden_dim, hidden_dim}, seed, scope + ".u_r");
  p.u_h = fan_in_param({hidden_dim, hidden_dim}, seed, scope + ".u_h");
  p.b_z = init_param({hidden_dim}, InitScheme::zeros, seed);
  p.b_r = init_param({hidden_dim}, InitScheme::zeros, seed);
  p.b_h = init_param({hidden_dim}, InitScheme::zeros, seed);
  return p;
}

BiLstmStack make_bilstm_stack(int input_dim, int output_dim, int num_layers, bool shortcut,
                              std::uint64_t seed, const std::string& scope) {
  if (output_dim < 2 || output_dim % 2 != 0)
    throw ConfigError("bilstm output_dim must be even and >= 2, got " +
                      std::to_string(output_dim));
  if (num_layers < 1) throw ConfigError("bilstm needs at least one layer");
  BiLstmStack stack;
  stack.shortcut = shortcut;
  stack.input_dim = input_dim;
  stack.output_dim = output_dim;
  const int hidden = output_dim / 2;
  int in = input_dim;
  for (int l = 0; l < num_layers; ++l) {
    const std::string layer_scope = scope + ".l" + std::to_string(l);
    stack.layers.push_back(BiLstmLayer{make_lstm(in, hidden, seed, layer_scope + ".fwd"),
                                       make_lstm(in, hidden, seed, layer_scope + ".bwd")});
    in = shortcut ? input_dim + output_dim : output_dim;
  }
  return stack;
}

std::pair<Tensor, Tensor> lstm_step(Graph& g, const Tensor& x, const Tensor& h, const Tensor& c,
                                    const LstmParams& p) {
  if (x.rank() != 1 || x.dim(0) != p.input_dim)
    throw ShapeError("lstm_step: input dim " + shape_str(x.shape()) + " vs expected " +
                     std::to_string(p.input_dim));
  if (h.dim(0) != p.hidden_dim || c.dim(0) != p.hidden_dim)
    throw ShapeError("lstm_step: state dim mismatch");
  auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b) {
    return g.add(g.add(g.matvec(w, x), g.matvec(u, h)), b);
  };
  Tensor i = g.activation(gate(p.w_i, p.u_i, p.b_i), Act::sigmoid);
  Tensor f = g.activation(gate(p.w_f, p.u_f, p.b_f), Act::sigmoid);
  Tensor o = g.activation(gate(p.w_o, p.u_o, p.b_o), Act::sigmoid);
  Tensor cand = g.activation(gate(p.w_g, p.u_g, p.b_g), Act::tanh_fn);
  Tensor c_next = g.add(g.mul(f, c), g.mul(i, cand));
  Tensor h_next = g.mul(o, g.activation(c_next, Act::tanh_fn));
  return {h_next, c_next};
}

Tensor gru_step(Graph& g, const Tensor& x, const Tensor& h, const GruParams& p) {
  if (x.rank() != 1 || x.dim(0) != p.input_dim)
    throw ShapeError("gru_step: input dim " + shape_str(x.shape()) + " vs expected " +
                     std::to_string(p.input_dim));
  if (h.dim(0) != p.hidden_dim) throw ShapeError("gru_step: state dim mismatch");
  Tensor z = g.activation(g.add(g.add(g.matvec(p.w_z, x), g.matvec(p.u_z, h)), p.b_z),
                          Act::sigmoid);
  Tensor r = g.activation(g.add(g.add(g.matvec(p.w_r, x), g.matvec(p.u_r, h)), p.b_r),
                          Act::sigmoid);
  Tensor cand = g.activation(
      g.add(g.add(g.matvec(p.w_h, x), g.matvec(p.u_h, g.mul(r, h))), p.b_h), Act::tanh_fn);
  // h' = (1-z) .* h + z .* cand
  return g.add(h, g.mul(z, g.sub(cand, h)));
}

Tensor bilstm_layer(Graph& g, const Tensor& seq, const BiLstmLayer& layer,
                    const Tensor* input_mask) {
  if (seq.rank() != 2) throw ShapeError("bilstm_layer expects a [len x d] matrix");
  const int len = seq.rows();
  const int hidden = layer.fwd.hidden_dim;
  Tensor input = input_mask ? g.mul_rowvec(seq, *input_mask) : seq;

  std::vector<Tensor> h_fwd(static_cast<std::size_t>(len));
  {
    Tensor h = Tensor::zeros({hidden});
    Tensor c = Tensor::zeros({hidden});
    for (int t = 0; t < len; ++t) {
      auto [hn, cn] = lstm_step(g, g.row(input, t), h, c, layer.fwd);
      h = hn;
      c = cn;
      h_fwd[static_cast<std::size_t>(t)] = h;
    }
  }
  std::vector<Tensor> h_bwd(static_cast<std::size_t>(len));
  {
    Tensor h = Tensor::zeros({hidden});
    Tensor c = Tensor::zeros({hidden});
    for (int t = len - 1; t >= 0; --t) {
      auto [hn, cn] = lstm_step(g, g.row(input, t), h, c, layer.bwd);
      h = hn;
      c = cn;
      h_bwd[static_cast<std::size_t>(t)] = h;
    }
  }
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(len));
  for (int t = 0; t < len; ++t)
    rows.push_back(g.concat({h_fwd[static_cast<std::size_t>(t)],
                             h_bwd[static_cast<std::size_t>(t)]},
                            0));
  return g.stack_rows(rows);
}

std::vector<Tensor> bilstm_all_layers(Graph& g, const Tensor& seq, const BiLstmStack& stack,
                                      std::span<const Tensor> masks) {
  if (seq.rank() != 2 || seq.cols() != stack.input_dim)
    throw ShapeError("bilstm: input dim " + shape_str(seq.shape()) + " vs stack input " +
                     std::to_string(stack.input_dim));
  if (!masks.empty() && masks.size() != stack.layers.size())
    throw ShapeError("bilstm: one mask per layer expected");
  std::vector<Tensor> outs;
  Tensor in = seq;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    if (l > 0 && stack.shortcut) in = g.concat({seq, in}, 1);
    const Tensor* mask = masks.empty() ? nullptr : &masks[l];
    in = bilstm_layer(g, in, stack.layers[l], mask);
    outs.push_back(in);
  }
  return outs;
}

Tensor bilstm(Graph& g, const Tensor& seq, const BiLstmStack& stack,
              std::span<const Tensor> masks) {
  return bilstm_all_layers(g, seq, stack, masks).back();
}

Tensor bilstm(Graph& g, const std::vector<Tensor>& seq, const BiLstmStack& stack,
              std::span<const Tensor> masks) {
  if (seq.empty()) throw EmptyInputError("bilstm: empty sequence");
  return bilstm(g, g.stack_rows(seq), stack, masks);
}

}  // namespace fusion
