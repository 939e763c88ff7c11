#pragma once

#include "densea/matrix.hpp"

namespace densea {

// One LSTM cell.  Weights are stored transposed ([4h x in] / [4h x h]) so a
// gate pre-activation is a contiguous dot against the input row; gate row
// order is [input; forget; cell; output].
struct LstmRefs {
  Mat Wx;  // 4h x in
  Mat Wh;  // 4h x h
  Mat b;   // 1 x 4h
};

struct LstmState {
  Mat h;  // 1 x h, contiguous
  Mat c;  // 1 x h, contiguous
};

LstmState lstm_zero_state(Tape& t, int hidden);
LstmState lstm_step(Tape& t, const Mat& x, const LstmState& prev, const LstmRefs& w);

}  // namespace densea
