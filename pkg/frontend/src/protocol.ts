// Recording protocol, mirroring the collection service's step set.

export type ProtocolStep = 'sustained_vowel' | 'sentence_read' | 'counting';

export interface StepSpec {
  step: ProtocolStep;
  title: string;
  prompt: string;
  minSeconds: number;
  maxSeconds: number;
}

export const PROTOCOL_STEPS: StepSpec[] = [
  {
    step: 'sustained_vowel',
    title: 'Sustained vowel',
    prompt: 'Take a breath and hold an "aaah" for as long as comfortable.',
    minSeconds: 1,
    maxSeconds: 30,
  },
  {
    step: 'sentence_read',
    title: 'Read the sentence',
    prompt: 'Read the sentence displayed on the card at a normal pace.',
    minSeconds: 3,
    maxSeconds: 60,
  },
  {
    step: 'counting',
    title: 'Count upward',
    prompt: 'Count upward from one, one number per breath.',
    minSeconds: 3,
    maxSeconds: 60,
  },
];

export const stepSpec = (step: ProtocolStep): StepSpec => {
  const found = PROTOCOL_STEPS.find((s) => s.step === step);
  if (!found) throw new Error(`unknown protocol step: ${step}`);
  return found;
};
