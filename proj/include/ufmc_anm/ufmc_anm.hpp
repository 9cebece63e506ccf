#ifndef UFMC_ANM_HPP
#define UFMC_ANM_HPP

#include "ufmc_anm/error.hpp"
#include "ufmc_anm/config.hpp"
#include "ufmc_anm/dsp.hpp"
#include "ufmc_anm/waveform.hpp"
#include "ufmc_anm/anm_solver.hpp"
#include "ufmc_anm/estimator.hpp"
#include "ufmc_anm/harness.hpp"
#include "ufmc_anm/config_io.hpp"

#endif
