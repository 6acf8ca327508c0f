// HTTP clients for the collection and inference services. fetch is
// injectable so tests can run against fakes or a locally spawned stack.

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface CollectionCreateBody {
  collection_id: string;
  participant_ref: string;
  collector_id: string;
  hospital_code: string;
  info: Record<string, string>;
}

export interface UploadResult {
  step: string;
  content_hash: string;
  sync_state: string;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

const detailOf = async (response: Response): Promise<string> => {
  try {
    const body = (await response.json()) as { detail?: string };
    return body.detail ?? response.statusText;
  } catch {
    return response.statusText;
  }
};

export class CollectionApi {
  constructor(private baseUrl: string, private fetchFn: FetchLike = fetch) {}

  async createCollection(body: CollectionCreateBody): Promise<void> {
    const response = await this.fetchFn(`${this.baseUrl}/collections`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw new ApiError(response.status, await detailOf(response));
  }

  async uploadAudio(
    collectionId: string,
    step: string,
    wavBytes: Uint8Array,
  ): Promise<UploadResult> {
    const response = await this.fetchFn(
      `${this.baseUrl}/collections/${collectionId}/audios/${step}`,
      {
        method: 'PUT',
        headers: { 'content-type': 'audio/wav' },
        body: wavBytes.slice().buffer,
      },
    );
    if (!response.ok) throw new ApiError(response.status, await detailOf(response));
    return (await response.json()) as UploadResult;
  }

  async getCollection(collectionId: string): Promise<Record<string, unknown>> {
    const response = await this.fetchFn(`${this.baseUrl}/collections/${collectionId}`);
    if (!response.ok) throw new ApiError(response.status, await detailOf(response));
    return (await response.json()) as Record<string, unknown>;
  }
}

export interface InferenceRecord {
  request_id: string;
  status: 'PENDING' | 'COMPLETED' | 'FAILED';
  result: { probability: number; label: string; model_version_id: string } | null;
  error_reason: string | null;
}

export class InferenceApi {
  constructor(private baseUrl: string, private fetchFn: FetchLike = fetch) {}

  async submit(modelName: string, wavBytes: Uint8Array, modelVersion?: number): Promise<string> {
    const form = new FormData();
    form.set('model_name', modelName);
    if (modelVersion !== undefined) form.set('model_version', String(modelVersion));
    form.set('file', new Blob([wavBytes.slice().buffer], { type: 'audio/wav' }), 'clip.wav');
    const response = await this.fetchFn(`${this.baseUrl}/inferences`, {
      method: 'POST',
      body: form,
    });
    if (!response.ok) throw new ApiError(response.status, await detailOf(response));
    const body = (await response.json()) as { request_id: string };
    return body.request_id;
  }

  async get(requestId: string): Promise<InferenceRecord> {
    const response = await this.fetchFn(`${this.baseUrl}/inferences/${requestId}`);
    if (!response.ok) throw new ApiError(response.status, await detailOf(response));
    return (await response.json()) as InferenceRecord;
  }
}
