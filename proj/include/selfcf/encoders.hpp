#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "selfcf/data.hpp"
#include "selfcf/numerics.hpp"

namespace selfcf {

enum class Backbone { mf, lightgcn };

Backbone parse_backbone(std::string_view name);
std::string_view to_string(Backbone backbone);

// Layer-0 embedding tables, the only learned state of a backbone.
struct EncoderParams {
  DenseMatrix users;
  DenseMatrix items;
  std::size_t layers = 0;

  std::size_t num_users() const { return users.rows(); }
  std::size_t num_items() const { return items.rows(); }
  std::size_t dim() const { return users.cols(); }

  // Each table Xavier-initialized on its own shape.
  static EncoderParams xavier(std::size_t num_users, std::size_t num_items, std::size_t dim,
                              std::size_t layers, std::uint64_t seed);

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

struct EncoderOutput {
  DenseMatrix users;        // full propagated user table
  DenseMatrix items;        // full propagated item table
  DenseMatrix batch_users;  // rows of `users` selected by the batch
  DenseMatrix batch_items;
};

// What a backward pass needs to know about the forward that preceded it.
struct ForwardContext {
  Backbone backbone = Backbone::mf;
  std::size_t layers = 0;
  const SparseMatrix* adjacency = nullptr;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<std::size_t> batch_users;
  std::vector<std::size_t> batch_items;
  bool ready = false;
};

struct EncoderGrad {
  DenseMatrix users;
  DenseMatrix items;
};

EncoderOutput mf_forward(const EncoderParams& params, const Batch& batch, ForwardContext& ctx);

// Layer-mean LightGCN readout: (1/(L+1)) * sum_{k=0..L} A^k E0 with
// L = params.layers.
EncoderOutput lightgcn_forward(const EncoderParams& params, const SparseMatrix& adjacency,
                               const Batch& batch, ForwardContext& ctx);

// Dispatches on backbone; adjacency is ignored for MF.
EncoderOutput encoder_forward(Backbone backbone, const EncoderParams& params,
                              const SparseMatrix* adjacency, const Batch& batch,
                              ForwardContext& ctx);

// Gradient w.r.t. the layer-0 tables given the upstream gradient of the
// batch rows.
EncoderGrad encoder_backward(const ForwardContext& ctx, const DenseMatrix& grad_batch_users,
                             const DenseMatrix& grad_batch_items);

// Same, with the upstream gradient given for the whole output tables.
EncoderGrad encoder_backward_full(const ForwardContext& ctx, DenseMatrix grad_users,
                                  DenseMatrix grad_items);

// (1/(L+1)) * sum_{k=0..L} A^k x. A is symmetric, so this is also its own
// adjoint.
DenseMatrix layer_mean_propagate(const SparseMatrix& adjacency, const DenseMatrix& x,
                                 std::size_t layers);

// Checkpoint block: "SCFCKPT\0", u32 version, u64 num_users, num_items, dim,
// layers, then the user and item tables as little-endian f64.
void write_encoder_block(std::ostream& out, const EncoderParams& params);
EncoderParams read_encoder_block(std::istream& in);

// Little-endian primitives shared with the predictor block.
namespace binary {
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64s(std::ostream& out, std::span<const double> values);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
void read_f64s(std::istream& in, std::span<double> values);
}  // namespace binary

}  // namespace selfcf
