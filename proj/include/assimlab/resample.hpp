#pragma once

#include "assimlab/audio.hpp"

namespace assimlab::audio {

struct ResampleOptions {
    std::size_t zero_crossings = 32;  // filter half-width in units of the narrower band's sample period
    double kaiser_beta = 8.6;
    double rolloff = 0.94;            // cutoff as a fraction of the lower Nyquist rate
};

// Kaiser-windowed sinc, polyphase over the reduced ratio L/M. Output length
// is round(n * target / source). Returns the input unchanged when the rates
// already agree.
AudioBuffer resample(const AudioBuffer& in, std::size_t target_rate, const ResampleOptions& opt = {});

}  // namespace assimlab::audio
