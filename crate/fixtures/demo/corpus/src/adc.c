#include "adc.h"

#define ADC_VREF_MV 3300u

void adc_init(adc_state_t *st)
{
    for (int i = 0; i < ADC_CHANNELS; i++) {
        st->raw[i] = 0;
    }
    st->enabled_mask = 0;
}

adc_status_t adc_enable_channel(adc_state_t *st, uint8_t channel)
{
    if (channel >= ADC_CHANNELS) {
        return ADC_ERR_CHANNEL;
    }
    st->enabled_mask |= (uint8_t)(1u << channel);
    return ADC_OK;
}

adc_status_t adc_read_millivolts(const adc_state_t *st, uint8_t channel, uint32_t *out_mv)
{
    if (channel >= ADC_CHANNELS || !(st->enabled_mask & (1u << channel))) {
        return ADC_ERR_CHANNEL;
    }
    /* Scale the 12-bit reading to the reference voltage. */
    *out_mv = ((uint32_t)st->raw[channel] * ADC_VREF_MV) / ADC_MAX_RAW;
    return ADC_OK;
}
