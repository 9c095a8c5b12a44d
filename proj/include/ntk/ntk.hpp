#pragma once

#include "ntk/cca.hpp"
#include "ntk/corrca.hpp"
#include "ntk/error.hpp"
#include "ntk/gazefix.hpp"
#include "ntk/io.hpp"
#include "ntk/lagembed.hpp"
#include "ntk/mmdecode.hpp"
#include "ntk/nullmodels.hpp"
#include "ntk/numcore.hpp"
#include "ntk/pipeline.hpp"
#include "ntk/report.hpp"
#include "ntk/rng.hpp"
#include "ntk/sigproc.hpp"
#include "ntk/synthgen.hpp"
#include "ntk/threadpool.hpp"
#include "ntk/timeseries.hpp"
