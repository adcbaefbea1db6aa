#pragma once

#include <functional>
#include <string>
#include <vector>

#include "param_store.hpp"
#include "tensor.hpp"

namespace dveslt {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode autodiff tape. Ops execute eagerly at build time and record
// a backward rule; the tape is an append-only DAG (every input index is
// smaller than its node index), so cycles cannot form. Every op output is
// checked for NaN/Inf and a non-finite value is a hard error.
class Tape {
public:
    struct Node {
        Tensor value;
        Tensor grad; // allocated lazily during backward
        std::vector<int> inputs;
        // accumulates into input grads; `self` is this node's id
        std::function<void(Tape&, int self)> backward;
        ParamStore* store = nullptr; // set on param leaves
        std::string pname;
    };

    Var leaf(Tensor v);                                      // constant input
    Var param(ParamStore& ps, const std::string& name);      // trainable leaf

    const Tensor& value(Var v) const { return node(v).value; }
    const Tensor& grad(Var v) const;

    // Backward from a scalar loss; accumulates parameter gradients into
    // their ParamStore entries (caller zeroes between steps).
    void backward(Var loss);
    // Backward from explicit output seeds.
    void backward_seeded(const std::vector<std::pair<Var, Tensor>>& seeds);

    size_t num_nodes() const { return nodes_.size(); }

    // --- internal plumbing used by op implementations ---
    Var emit(Tensor value, std::vector<int> inputs,
             std::function<void(Tape&, int)> bw, const char* opname);
    Node& node(Var v) {
        if (v.tape != this) fail("var does not belong to this tape");
        return nodes_.at(static_cast<size_t>(v.id));
    }
    const Node& node(Var v) const {
        if (v.tape != this) fail("var does not belong to this tape");
        return nodes_.at(static_cast<size_t>(v.id));
    }
    Node& node(int id) { return nodes_.at(static_cast<size_t>(id)); }
    Tensor& grad_buf(int id); // zero-allocates on first touch

private:
    std::vector<Node> nodes_;
};

// ---- primitive ops ------------------------------------------------------
// Elementwise / arithmetic
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scalar_mul(Var a, double c);
Var mul_scalar_var(Var a, Var s); // s scalar node, broadcast
Var reciprocal(Var a);
Var exp_op(Var a);
Var log_op(Var a);
Var neg(Var a);
Var relu(Var a);
Var clamp_min(Var a, double m);

// Reductions / shaping
Var sum_all(Var a);                       // -> scalar
Var mean_rows(Var a);                     // [L,d] -> [d]
Var mean_trailing(Var a);                 // [N,C,...] -> [N,C], mean over trailing dims
Var reshape(Var a, Shape s);
Var transpose2(Var a);                    // [m,n] -> [n,m]
Var permute3(Var a, int p0, int p1, int p2);
Var concat_cols(Var a, Var b);            // [L,d1],[L,d2] -> [L,d1+d2]
Var stack_rows(const std::vector<Var>& rows); // k vectors [d] -> [k,d]
Var diag_sum(Var a);                      // [n,n] -> scalar
Var repeat_to_length(Var a, int64_t stride, int64_t total); // [W,d] -> [total,d]

// Broadcast add
Var add_rowvec(Var x, Var b);             // [...,d] + [d]
Var add_bcast_last2(Var a, Var m);        // [h,L,L] + [L,L]

// Linear algebra
Var matmul(Var a, Var b);                 // [m,k]x[k,n]
Var bmm(Var a, Var b);                    // [h,m,k]x[h,k,n]

// Neural-net ops
Var softmax_last(Var a);
Var log_softmax_last(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5); // over last axis
// Per-sample batch norm over the length axis of [L,C]; train mode uses
// batch statistics and updates running stats in the store, eval mode uses
// the stored running statistics.
Var batch_norm_seq(Var x, Var gamma, Var beta, ParamStore& ps,
                   const std::string& mean_name, const std::string& var_name,
                   bool train, double momentum = 0.1, double eps = 1e-5);
Var l2norm_rows(Var x);                   // [n,d] rows to unit norm
Var embedding(Var table, const std::vector<int>& ids); // [V,d] -> [n,d]
// Mean token-level cross entropy from logits [L,V] vs target ids,
// positions equal to ignore_index excluded.
Var cross_entropy(Var logits, const std::vector<int>& targets, int ignore_index = -1);

// Convolutions ("same" padding) and max pooling (window 2, stride 2)
Var conv1d_same(Var x, Var w, Var b);     // [L,Cin] * [Cout,Cin,K] -> [L,Cout]
Var maxpool1d2(Var x);                    // [L,C] -> [L/2,C]
Var conv2d_same(Var x, Var w, Var b);     // [N,Cin,H,W] * [Cout,Cin,K,K]
Var maxpool2d2(Var x);                    // [N,C,H,W] -> [N,C,H/2,W/2]
Var conv3d_same(Var x, Var w, Var b);     // [N,Cin,D,H,W] * [Cout,Cin,K,K,K]
Var maxpool3d2(Var x);

} // namespace dveslt
