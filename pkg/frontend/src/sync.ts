// Offline sync: push everything not yet SENT to the collection service.
// Server-side idempotence (client-generated UUIDs, replay-safe uploads)
// makes it safe to call this any number of times, including after crashes
// mid-sync. Blobs are never dropped: a failed item keeps its bytes and
// flips to ERROR for a later retry.

import { ApiError, CollectionApi } from './api.js';
import { OfflineQueue, PendingItem } from './queue.js';

export interface SyncSummary {
  sent: number;
  failed: number;
  skipped: number;
  offline: boolean;
}

export const syncPending = async (
  queue: OfflineQueue,
  api: CollectionApi,
): Promise<SyncSummary> => {
  const summary: SyncSummary = { sent: 0, failed: 0, skipped: 0, offline: false };
  const items = queue.list();
  const ensuredSessions = new Set<string>();

  for (const item of items) {
    if (item.state === 'SENT') {
      summary.skipped += 1;
      continue;
    }
    let current: PendingItem = queue.update(item, 'SENDING');
    try {
      if (!ensuredSessions.has(item.collectionId)) {
        const session = queue.getSession(item.collectionId);
        if (session) {
          await api.createCollection({
            collection_id: session.collectionId,
            participant_ref: session.participantRef,
            collector_id: session.collectorId,
            hospital_code: session.hospitalCode,
            info: session.info,
          });
        }
        ensuredSessions.add(item.collectionId);
      }
      await api.uploadAudio(current.collectionId, current.step, current.wavBytes);
      queue.update(current, 'SENT');
      summary.sent += 1;
    } catch (err) {
      if (err instanceof ApiError) {
        // server-side rejection (e.g. 409 conflict): isolate this item
        queue.update(current, 'ERROR', `${err.status}: ${err.message}`);
        summary.failed += 1;
      } else {
        // network failure: we are offline; requeue and stop trying
        queue.update(current, 'QUEUED');
        summary.offline = true;
        break;
      }
    }
  }
  return summary;
};
